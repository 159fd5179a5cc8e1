"""Pure-numpy summation core (fallback for the compiled extension).

The single entry point mirrors ``_fastcore.window_sums`` exactly: windowed
sums of a polynomial-profile kernel and of its square around each query
point, for a sorted one-dimensional sample.
"""

from __future__ import annotations

import numpy as np


def window_sums(x_sorted, scale, power, ts, h):
    """Sums of K((t - x)/h) and K²((t - x)/h) over the sample, per query.

    Parameters
    ----------
    x_sorted:
        Sorted 1-d float64 sample.
    scale, power:
        Profile parameters of K(u) = scale * (1 - |u|^power)+.
    ts:
        Query points (1-d float64).
    h:
        Bandwidth (positive scalar).

    Returns
    -------
    (s1, s2):
        Arrays of the same length as ``ts``.
    """
    x = np.asarray(x_sorted, dtype=float)
    queries = np.asarray(ts, dtype=float)
    s1 = np.zeros(queries.shape[0])
    s2 = np.zeros(queries.shape[0])
    lo = np.searchsorted(x, queries - h, side="left")
    hi = np.searchsorted(x, queries + h, side="right")
    for k in range(queries.shape[0]):
        if hi[k] <= lo[k]:
            continue
        u = np.abs(queries[k] - x[lo[k] : hi[k]]) / h
        vals = scale * np.clip(1.0 - u**power, 0.0, None)
        s1[k] = vals.sum()
        s2[k] = (vals * vals).sum()
    return s1, s2
