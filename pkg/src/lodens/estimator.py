"""Adaptive pointwise density estimation on a dyadic bandwidth grid.

The estimator evaluates a kernel density estimate at every bandwidth of a
dyadic grid, attaches to each bandwidth an empirical variance proxy that is
floored (so it never collapses) and capped (so outliers cannot inflate it),
and then compares estimates pairwise: a bandwidth is admissible when its
estimate stays within a noise-sized band of every higher-variance
alternative.  Among admissible bandwidths the one with the smallest variance
proxy wins.  Shrinking variance — not bandwidth — is what lets the selected
window grow in low-density regions, which is the entire point.

All logarithms are natural.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import window_sums
from .kernels import KernelSpec, PolyComponent, eval_kernel, sandwich_scale

__all__ = [
    "EstimatorConfig",
    "BandwidthGrid",
    "SelectionTrace",
    "effective_smoothness",
    "build_grid",
    "kde",
    "empirical_variance",
    "variance_floor",
    "variance_cap",
    "floored_variance",
    "truncated_variance",
    "admissible_set",
    "select_bandwidth",
    "adaptive_estimate",
    "adaptive_estimate_batch",
    "known_beta_estimate",
    "classical_bandwidth",
    "classical_estimate",
    "oracle_bandwidth",
    "oracle_estimate",
    "balancing_bandwidth",
    "balancing_level",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning constants for the adaptive estimator.

    Attributes
    ----------
    density_sup_bound:
        Known (or assumed) upper bound on the target density.  Caps both the
        final estimate and the variance proxy; must be positive.
    threshold_const:
        Multiplier on the comparison threshold sqrt(variance * ln n).
        Smaller values make the selection more aggressive.
    risk_power:
        Exponent r of the absolute-error risk |estimate - truth|^r.
    isotropic:
        Restrict the grid to equal bandwidths across axes and order
        comparisons by componentwise bandwidth instead of by variance.
    trunc_log_exp:
        Log-power in the truncation level of :func:`known_beta_estimate`.
    beta_range, L_range:
        Smoothness/modulus adaptation range the constants were chosen for
        (recorded for provenance; the selection itself never reads them).
    """

    density_sup_bound: float
    threshold_const: float = 4.0
    risk_power: float = 1.0
    isotropic: bool = False
    trunc_log_exp: float = 1.0
    beta_range: tuple = (1.0, 1.0)
    L_range: tuple = (1.0, 1.0)

    def __post_init__(self):
        if not self.density_sup_bound > 0:
            raise ValueError(f"density_sup_bound must be positive, got {self.density_sup_bound}")
        if not self.threshold_const > 0:
            raise ValueError(f"threshold_const must be positive, got {self.threshold_const}")
        if not self.risk_power >= 1:
            raise ValueError(f"risk_power must be at least 1, got {self.risk_power}")
        lo, hi = self.beta_range
        if not 0 < lo <= hi <= 2:
            raise ValueError(f"beta_range must satisfy 0 < lo <= hi <= 2, got {self.beta_range}")
        llo, lhi = self.L_range
        if not 0 < llo <= lhi:
            raise ValueError(f"L_range must satisfy 0 < lo <= hi, got {self.L_range}")


def effective_smoothness(beta) -> float:
    """Harmonic aggregate 1 / Σ_i (1/beta_i); equals beta itself when d=1.

    Dimension is baked in: for beta=(1, 1) this is 1/2, matching the usual
    two-dimensional rate exponents without carrying d separately.
    """
    bv = np.asarray(beta, dtype=float).reshape(-1)
    if np.any(bv <= 0):
        raise ValueError(f"smoothness indices must be positive, got {bv.tolist()}")
    return float(1.0 / np.sum(1.0 / bv))


@dataclass(frozen=True)
class BandwidthGrid:
    """Dyadic bandwidth grid 2^(-j) over admissible level vectors j.

    Anisotropic grids take every j with Σ_i j_i <= max_level; isotropic
    grids take equal components with d*j <= max_level.  Rows are sorted
    lexicographically, and `meet_table[a, b]` is the row index of the
    componentwise minimum of rows a and b (always itself a grid row).
    """

    dims: int
    max_level: int
    isotropic: bool
    indices: np.ndarray
    bandwidths: np.ndarray
    meet_table: np.ndarray
    _row_of: dict = field(default_factory=dict, compare=False, repr=False)

    def row_of(self, level) -> int:
        """Row index of a level vector (raises KeyError when off the grid)."""
        return self._row_of[tuple(int(v) for v in np.asarray(level).reshape(-1))]


def build_grid(n: int, dims: int = 1, isotropic: bool = False) -> BandwidthGrid:
    """Bandwidth grid for a sample of size ``n``.

    The deepest level is floor(log2(n / ln²n)), so the variance floor never
    exceeds the variance cap by more than a constant; ``n`` must satisfy
    n / ln²n > 1, otherwise no level exists and a ValueError explains it.
    """
    if n < 2:
        raise ValueError(f"sample size must be at least 2, got {n}")
    ratio = n / math.log(n) ** 2
    if ratio <= 1.0:
        raise ValueError(
            f"sample size {n} is too small for a bandwidth grid: need n / ln²(n) > 1, got {ratio:.4g}"
        )
    max_level = math.floor(math.log2(ratio))
    if isotropic:
        rows = [(j,) * dims for j in range(max_level // dims + 1)]
    else:
        rows = [
            j for j in itertools.product(range(max_level + 1), repeat=dims) if sum(j) <= max_level
        ]
    indices = np.array(rows, dtype=np.int64).reshape(len(rows), dims)
    row_of = {tuple(r): i for i, r in enumerate(rows)}
    m = len(rows)
    meet = np.empty((m, m), dtype=np.int64)
    for a in range(m):
        for b in range(m):
            meet[a, b] = row_of[tuple(np.minimum(indices[a], indices[b]))]
    grid = BandwidthGrid(
        dims=dims,
        max_level=max_level,
        isotropic=isotropic,
        indices=indices,
        bandwidths=2.0 ** (-indices.astype(float)),
        meet_table=meet,
    )
    grid._row_of.update(row_of)
    return grid


# ---------------------------------------------------------------------------
# kernel sums
# ---------------------------------------------------------------------------

def _as_sample(sample, dims: int | None = None) -> np.ndarray:
    arr = np.asarray(sample, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"sample must be (n,) or (n, d), got shape {np.shape(sample)}")
    if dims is not None and arr.shape[1] != dims:
        raise ValueError(f"sample has {arr.shape[1]} columns but the kernel has {dims} axes")
    return arr


def _as_points(points, dims: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dims == 1 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != dims:
        raise ValueError(f"points of shape {np.shape(points)} do not match {dims} kernel axes")
    return pts


def _pair_sums(sample2d: np.ndarray, spec: KernelSpec, points2d: np.ndarray, h) -> tuple:
    """Sums of K((t - X)/h) and K²((t - X)/h) for every query point."""
    hv = np.asarray(h, dtype=float).reshape(-1)
    comp = spec.components[0]
    if spec.dims == 1 and isinstance(comp, PolyComponent):
        x = np.ascontiguousarray(np.sort(sample2d[:, 0]))
        return window_sums(x, comp.scale, comp.power, np.ascontiguousarray(points2d[:, 0]), hv[0])
    s1 = np.zeros(points2d.shape[0])
    s2 = np.zeros(points2d.shape[0])
    chunk = max(1, (1 << 22) // max(sample2d.shape[0], 1))
    for start in range(0, points2d.shape[0], chunk):
        block = points2d[start : start + chunk]
        u = (block[:, None, :] - sample2d[None, :, :]) / hv
        vals = np.ones(u.shape[:2])
        for i, c in enumerate(spec.components):
            ui = u[:, :, i]
            # clip before evaluating: callables need not be defined off [-1, 1]
            vals *= np.where(np.abs(ui) <= 1.0, c(np.clip(ui, -1.0, 1.0)), 0.0)
        s1[start : start + chunk] = vals.sum(axis=1)
        s2[start : start + chunk] = (vals * vals).sum(axis=1)
    return s1, s2


def kde(sample, spec: KernelSpec, h, t):
    """Kernel density estimate at ``t`` (scalar point -> float, batch -> array).

    An empty sample estimates zero everywhere.
    """
    sample2d = _as_sample(sample, spec.dims)
    pts = _as_points(t, spec.dims)
    hv = np.asarray(h, dtype=float).reshape(-1)
    if hv.shape[0] != spec.dims or np.any(hv <= 0):
        raise ValueError(f"bandwidth must be {spec.dims} positive component(s), got {np.asarray(h).tolist()}")
    single = np.asarray(t).ndim == 0 or (spec.dims > 1 and np.asarray(t).ndim == 1)
    n = sample2d.shape[0]
    if n == 0:
        out = np.zeros(pts.shape[0])
        return 0.0 if single else out
    s1, _ = _pair_sums(sample2d, spec, pts, hv)
    out = s1 / (n * math.prod(hv.tolist()))
    return float(out[0]) if single else out


def empirical_variance(sample, spec: KernelSpec, h, t) -> float:
    """Empirical variance proxy Σ K²((t - X)/h) / (n Πh)²."""
    sample2d = _as_sample(sample, spec.dims)
    pts = _as_points(t, spec.dims)
    if pts.shape[0] != 1:
        raise ValueError("variance proxy is evaluated at a single point")
    hv = np.asarray(h, dtype=float).reshape(-1)
    n = sample2d.shape[0]
    if n == 0:
        raise ValueError("variance proxy needs a nonempty sample")
    _, s2 = _pair_sums(sample2d, spec, pts, hv)
    return float(s2[0] / (n * math.prod(hv.tolist())) ** 2)


def variance_floor(n: int, h) -> float:
    """Deterministic lower truncation ln²n / (n Πh)²."""
    hv = np.asarray(h, dtype=float).reshape(-1)
    return math.log(n) ** 2 / (n * math.prod(hv.tolist())) ** 2


def variance_cap(spec: KernelSpec, sup_bound: float, n: int, h) -> float:
    """Upper truncation ||K||₂² * sup_bound / (n Πh)."""
    hv = np.asarray(h, dtype=float).reshape(-1)
    return spec.l2_norm_sq * sup_bound / (n * math.prod(hv.tolist()))


def floored_variance(sample, spec: KernelSpec, h, t) -> float:
    """Empirical variance proxy with the deterministic floor applied."""
    sample2d = _as_sample(sample, spec.dims)
    return max(variance_floor(sample2d.shape[0], h), empirical_variance(sample2d, spec, h, t))


def truncated_variance(sample, spec: KernelSpec, h, t, sup_bound: float) -> float:
    """Floored variance proxy additionally capped at the sup-bound level.

    This is the quantity the selection rule orders bandwidths by.
    """
    sample2d = _as_sample(sample, spec.dims)
    return min(floored_variance(sample2d, spec, h, t), variance_cap(spec, sup_bound, sample2d.shape[0], h))


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionTrace:
    """Everything the selection rule looked at for a single point.

    ``margins[a, b]`` is threshold - |difference| for the comparison of grid
    row a against row b (+inf where b was not in a's comparison class), so a
    row is admissible exactly when its row of margins is nonnegative.
    """

    indices: np.ndarray
    bandwidths: np.ndarray
    estimates: np.ndarray
    sigma_sq: np.ndarray
    margins: np.ndarray
    admissible: np.ndarray
    chosen: int
    fallback: bool
    estimate: float


def _selection_core(sample2d, spec, grid, config, points2d):
    """Vectorized selection for a batch of points.

    Returns (estimates (m, P), sigma (m, P), chosen (P,), fallback (P,),
    capped estimate at chosen row (P,)).
    """
    n = sample2d.shape[0]
    if n < 2:
        raise ValueError(f"adaptive selection needs a sample of size at least 2, got {n}")
    m = grid.indices.shape[0]
    P = points2d.shape[0]
    log_n = math.log(n)
    est = np.empty((m, P))
    sig = np.empty((m, P))
    vols = grid.bandwidths.prod(axis=1)
    fast = spec.dims == 1 and isinstance(spec.components[0], PolyComponent)
    if fast:
        comp = spec.components[0]
        x = np.ascontiguousarray(np.sort(sample2d[:, 0]))
        ts = np.ascontiguousarray(points2d[:, 0])
        for r in range(m):
            s1, s2 = window_sums(x, comp.scale, comp.power, ts, grid.bandwidths[r, 0])
            est[r] = s1 / (n * vols[r])
            sig[r] = s2 / (n * vols[r]) ** 2
    else:
        for r in range(m):
            s1, s2 = _pair_sums(sample2d, spec, points2d, grid.bandwidths[r])
            est[r] = s1 / (n * vols[r])
            sig[r] = s2 / (n * vols[r]) ** 2
    floor = log_n**2 / (n * vols) ** 2
    cap = spec.l2_norm_sq * config.density_sup_bound / (n * vols)
    sig = np.minimum(np.maximum(sig, floor[:, None]), cap[:, None])

    chosen = np.empty(P, dtype=np.int64)
    fallback = np.zeros(P, dtype=bool)
    admissible = np.empty((m, P), dtype=bool)
    margins_last = None
    if grid.isotropic:
        compare = np.all(grid.indices[None, :, :] >= grid.indices[:, None, :], axis=2)
    block = max(1, (1 << 22) // (m * m))
    for start in range(0, P, block):
        sl = slice(start, min(start + block, P))
        sig_b = sig[:, sl]
        est_b = est[:, sl]
        diff = np.abs(est_b[grid.meet_table] - est_b[None, :, :])
        thr = config.threshold_const * np.sqrt(sig_b * log_n)[None, :, :]
        if grid.isotropic:
            eligible = np.broadcast_to(compare[:, :, None], diff.shape)
        else:
            eligible = sig_b[None, :, :] >= sig_b[:, None, :]
        margins = np.where(eligible, thr - diff, np.inf)
        adm = np.all(margins >= 0.0, axis=1)
        admissible[:, sl] = adm
        empty = ~np.any(adm, axis=0)
        masked = np.where(adm, sig_b, np.inf)
        pick = np.argmin(masked, axis=0)
        pick_fb = np.argmax(sig_b, axis=0)
        chosen[sl] = np.where(empty, pick_fb, pick)
        fallback[sl] = empty
        if start == 0 and sl.stop >= P:
            margins_last = margins  # only meaningful when one block covers all points
    values = np.minimum(est[chosen, np.arange(P)], config.density_sup_bound)
    return est, sig, admissible, chosen, fallback, values, margins_last


def select_bandwidth(sample, spec: KernelSpec, config: EstimatorConfig, t, grid: BandwidthGrid | None = None) -> SelectionTrace:
    """Run the full comparison scheme at one point and keep the evidence."""
    sample2d = _as_sample(sample, spec.dims)
    if grid is None:
        grid = build_grid(sample2d.shape[0], spec.dims, config.isotropic)
    pts = _as_points(t, spec.dims)
    if pts.shape[0] != 1:
        raise ValueError("select_bandwidth traces a single point; use adaptive_estimate_batch for batches")
    est, sig, adm, chosen, fb, values, margins = _selection_core(sample2d, spec, grid, config, pts)
    return SelectionTrace(
        indices=grid.indices,
        bandwidths=grid.bandwidths,
        estimates=est[:, 0],
        sigma_sq=sig[:, 0],
        margins=margins[:, :, 0],
        admissible=adm[:, 0],
        chosen=int(chosen[0]),
        fallback=bool(fb[0]),
        estimate=float(values[0]),
    )


def admissible_set(sample, spec: KernelSpec, config: EstimatorConfig, t, grid: BandwidthGrid | None = None):
    """Admissible grid rows at ``t``: (mask, variance proxies, margins)."""
    trace = select_bandwidth(sample, spec, config, t, grid)
    return trace.admissible, trace.sigma_sq, trace.margins


def adaptive_estimate(sample, spec: KernelSpec, config: EstimatorConfig, t, grid: BandwidthGrid | None = None) -> float:
    """Adaptive density estimate at a single point (capped at the sup bound)."""
    return select_bandwidth(sample, spec, config, t, grid).estimate


def adaptive_estimate_batch(sample, spec: KernelSpec, config: EstimatorConfig, points, grid: BandwidthGrid | None = None) -> np.ndarray:
    """Adaptive estimates at many points, sharing one pass over the grid."""
    sample2d = _as_sample(sample, spec.dims)
    if grid is None:
        grid = build_grid(sample2d.shape[0], spec.dims, config.isotropic)
    pts = _as_points(points, spec.dims)
    _, _, _, _, _, values, _ = _selection_core(sample2d, spec, grid, config, pts)
    return values


def known_beta_estimate(sample, spec: KernelSpec, config: EstimatorConfig, t, beta, grid: BandwidthGrid | None = None) -> float:
    """Adaptive estimate truncated to zero below the known-smoothness level.

    The truncation level is n^(-b/(b+1)) * (ln n)^trunc_log_exp with b the
    effective smoothness; for n=100, beta=1 and log exponent 1 it is about
    0.4605.
    """
    sample2d = _as_sample(sample, spec.dims)
    n = sample2d.shape[0]
    bb = effective_smoothness(beta)
    level = n ** (-bb / (bb + 1.0)) * math.log(n) ** config.trunc_log_exp
    value = adaptive_estimate(sample2d, spec, config, t, grid)
    return value if value >= level else 0.0


# ---------------------------------------------------------------------------
# non-adaptive references
# ---------------------------------------------------------------------------

def classical_bandwidth(n: int, beta) -> np.ndarray:
    """Textbook plug-in bandwidth n^(-(b/(2b+1))/beta_i), b = effective smoothness."""
    bv = np.asarray(beta, dtype=float).reshape(-1)
    bb = effective_smoothness(bv)
    return n ** (-(bb / (2.0 * bb + 1.0)) / bv)


def classical_estimate(sample, spec: KernelSpec, t, beta) -> float:
    """KDE at the classical bandwidth (no selection, no cap)."""
    sample2d = _as_sample(sample, spec.dims)
    return kde(sample2d, spec, classical_bandwidth(sample2d.shape[0], beta), t)


def oracle_bandwidth(n: int, delta: float, beta) -> np.ndarray:
    """Bandwidth (delta/n)^((b/(2b+1))/beta_i) tuned to a known density level."""
    if delta <= 0:
        raise ValueError(f"density level must be positive, got {delta}")
    bv = np.asarray(beta, dtype=float).reshape(-1)
    bb = effective_smoothness(bv)
    return (delta / n) ** ((bb / (2.0 * bb + 1.0)) / bv)


def oracle_estimate(sample, spec: KernelSpec, t, delta: float, beta) -> float:
    """Level-oracle estimator: zero below the detection breakpoint, else KDE
    at the level-tuned bandwidth (for d=1, beta=1, delta=1, n=1000 the
    bandwidth is 0.1)."""
    sample2d = _as_sample(sample, spec.dims)
    n = sample2d.shape[0]
    bb = effective_smoothness(beta)
    if delta < n ** (-bb / (bb + 1.0)):
        return 0.0
    return kde(sample2d, spec, oracle_bandwidth(n, delta, beta), t)


def balancing_bandwidth(spec: KernelSpec, beta, L: float, n: int, density_at_t: float) -> np.ndarray:
    """Bias/variance balancing bandwidth at a point with known density value.

    Componentwise ``c * max((ln n / n)^((b/(b+1))/beta_i),
    (p(t) ln n / n)^((b/(2b+1))/beta_i))`` with ``c`` the sandwich scale of
    the kernel; the two branches cross exactly at the detection breakpoint.
    """
    if density_at_t < 0:
        raise ValueError(f"density value must be nonnegative, got {density_at_t}")
    bv = np.asarray(beta, dtype=float).reshape(-1)
    bb = effective_smoothness(bv)
    scale = sandwich_scale(spec, bv, L)
    log_ratio = math.log(n) / n
    sparse = log_ratio ** ((bb / (bb + 1.0)) / bv)
    dense = (density_at_t * log_ratio) ** ((bb / (2.0 * bb + 1.0)) / bv) if density_at_t > 0 else np.zeros_like(bv)
    return scale * np.maximum(sparse, dense)


def balancing_level(h) -> np.ndarray:
    """Grid level just below a bandwidth: j_i = floor(log2(1/h_i)) + 1.

    The returned levels satisfy h_i/2 <= 2^(-j_i) <= h_i; negative levels
    are clamped to zero so the result is always on a (sufficiently deep)
    grid.
    """
    hv = np.asarray(h, dtype=float).reshape(-1)
    if np.any(hv <= 0):
        raise ValueError(f"bandwidths must be positive, got {hv.tolist()}")
    levels = np.floor(np.log2(1.0 / hv)).astype(np.int64) + 1
    return np.maximum(levels, 0)
