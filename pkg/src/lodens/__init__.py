"""lodens — locally adaptive density estimation with support recovery.

A pointwise kernel density estimator that picks its bandwidth per point by
variance-ordered pairwise comparisons (so windows widen exactly where the
density is low), the matching plug-in support estimator, and a Monte Carlo
harness for verifying the two-regime convergence rates.
"""

from ._backend import BACKEND_KIND
from .densities import (
    DensityModel,
    MarginInfo,
    SuperefficiencyPair,
    bias_bound,
    cdf_at,
    draw_sample,
    margin_family,
    margin_volume,
    oracle_bias,
    oracle_floored_variance,
    oracle_variance,
    pdf_at,
    product_density,
    superefficiency_pair,
    triangular_density,
    uniform_density,
)
from .estimator import (
    BandwidthGrid,
    EstimatorConfig,
    SelectionTrace,
    adaptive_estimate,
    adaptive_estimate_batch,
    admissible_set,
    balancing_bandwidth,
    balancing_level,
    build_grid,
    classical_bandwidth,
    classical_estimate,
    effective_smoothness,
    empirical_variance,
    floored_variance,
    kde,
    known_beta_estimate,
    oracle_bandwidth,
    oracle_estimate,
    select_bandwidth,
    truncated_variance,
    variance_cap,
    variance_floor,
)
from .kernels import (
    KernelSpec,
    PolyComponent,
    abs_moment,
    epanechnikov_kernel,
    eval_kernel,
    eval_rescaled,
    holder_kernel,
    make_kernel,
    poly_component,
    sandwich_scale,
    sq_moment,
    triangular_kernel,
)
from .simharness import (
    ExperimentReport,
    FitResult,
    breakpoint_level,
    rate_fit,
    rate_psi,
    rate_psi_tilde,
    rate_theta,
    risk_experiment,
    superefficiency_experiment,
    support_experiment,
    support_rate,
    threshold_scan,
    version_string,
    write_plot_tsv,
    write_report_csv,
    write_report_json,
)
from .support import (
    GridSet,
    boundary_shell_ratio,
    cell_centers,
    deserialize_grid_set,
    dilate,
    erode,
    grid_set,
    measure,
    offset_level,
    plugin_support,
    rasterize,
    serialize_grid_set,
    shell_ratio_report,
    symmetric_difference_measure,
    true_support,
)

try:
    from importlib.metadata import version as _pkg_version

    __version__ = _pkg_version("lodens")
except Exception:  # pragma: no cover - metadata missing in odd installs
    __version__ = "0.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
