"""Backend selection for the summation core.

The compiled extension is preferred when it imported cleanly; setting the
environment variable ``LODENS_PURE=1`` forces the numpy fallback (used by
the backend-agreement tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _purecore

if os.environ.get("LODENS_PURE"):
    _impl = _purecore
    BACKEND_KIND = "pure"
else:
    try:
        from . import _fastcore as _impl  # type: ignore[no-redef]

        BACKEND_KIND = "compiled"
    except ImportError:
        _impl = _purecore
        BACKEND_KIND = "pure"

window_sums = _impl.window_sums
