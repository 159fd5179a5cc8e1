"""Monte Carlo harness: rate functions, log-log fits, and experiments.

Determinism contract: every replicate derives its generator from the tuple
(master seed, sample-size index, point index, replicate index), tasks are
laid out in a fixed order, and aggregation runs over that order — so results
are byte-identical for any worker count.  Natural logarithms throughout.
"""

from __future__ import annotations

import math
import subprocess
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .densities import DensityModel, draw_sample, pdf_at, superefficiency_pair
from .estimator import (
    EstimatorConfig,
    adaptive_estimate,
    build_grid,
    classical_bandwidth,
    classical_estimate,
    effective_smoothness,
    kde,
    known_beta_estimate,
    oracle_estimate,
)
from .kernels import KernelSpec
from .support import (
    cell_centers,
    grid_set,
    offset_level,
    plugin_support,
    rasterize,
    symmetric_difference_measure,
    true_support,
)

__all__ = [
    "FitResult",
    "ExperimentReport",
    "breakpoint_level",
    "rate_psi",
    "rate_psi_tilde",
    "support_rate",
    "rate_theta",
    "rate_fit",
    "risk_experiment",
    "support_experiment",
    "superefficiency_experiment",
    "threshold_scan",
    "version_string",
    "write_report_csv",
    "write_report_json",
    "write_plot_tsv",
]

ESTIMATOR_KINDS = ("adaptive", "classical", "oracle", "known_beta", "truth", "zero")


# ---------------------------------------------------------------------------
# rate functions
# ---------------------------------------------------------------------------

def breakpoint_level(beta, n: int) -> float:
    """Detection breakpoint n^(-b/(b+1)); below it the level drowns in noise."""
    bb = effective_smoothness(beta)
    return n ** (-bb / (bb + 1.0))


def rate_psi(x, beta, n: int):
    """Two-regime pointwise rate: min(x, (x/n)^(b/(2b+1))).

    The branches cross exactly at the detection breakpoint, so the function
    is continuous in x.
    """
    bb = effective_smoothness(beta)
    xv = np.asarray(x, dtype=float)
    out = np.minimum(xv, (xv / n) ** (bb / (2.0 * bb + 1.0)))
    return float(out) if out.ndim == 0 else out


def rate_psi_tilde(x, beta, n: int):
    """Adaptive-rate envelope: max(breakpoint, (x/n)^(b/(2b+1))) * (ln n)^{3/2}."""
    bb = effective_smoothness(beta)
    bp = breakpoint_level(beta, n)
    xv = np.asarray(x, dtype=float)
    out = np.maximum(bp, (xv / n) ** (bb / (2.0 * bb + 1.0))) * math.log(n) ** 1.5
    return float(out) if out.ndim == 0 else out


def support_rate(beta: float, gamma: float, dims: int, n: int) -> float:
    """Support-recovery rate n^(-gamma*beta/(beta+d))."""
    return n ** (-gamma * beta / (beta + dims))


def rate_theta(x, beta, n: int, zeta2: float):
    """Rate with a polynomial floor: max(rate_psi(x), n^(-zeta2))."""
    xv = np.asarray(x, dtype=float)
    out = np.maximum(rate_psi(xv, beta, n), n ** (-zeta2))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# log-log fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of log(risk) against log(n)."""

    slope: float
    intercept: float
    r_squared: float
    slope_se: float
    n_points: int


def rate_fit(points) -> FitResult:
    """Fit a power law through (n, risk) pairs on the log-log scale.

    Nonpositive risks cannot be logged; they are dropped with a warning.
    Fewer than three usable pairs leave the slope meaningless, so that is
    an error.
    """
    pts = [(float(n), float(r)) for n, r in points]
    usable = [(n, r) for n, r in pts if r > 0.0]
    dropped = len(pts) - len(usable)
    if dropped:
        warnings.warn(f"rate_fit dropped {dropped} nonpositive risk value(s)", stacklevel=2)
    if len(usable) < 3:
        raise ValueError(f"rate_fit needs at least 3 positive risks, got {len(usable)}")
    lx = np.log([n for n, _ in usable])
    ly = np.log([r for _, r in usable])
    design = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = ly - design @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 if tss == 0.0 else 1.0 - rss / tss
    dof = len(usable) - 2
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    slope_se = math.sqrt(rss / dof / sxx) if dof > 0 else float("nan")
    return FitResult(slope=slope, intercept=intercept, r_squared=r_squared, slope_se=slope_se, n_points=len(usable))


# ---------------------------------------------------------------------------
# experiment plumbing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentReport:
    """Aggregated Monte Carlo output.

    ``rows`` all carry the same columns (experiment_id, n, t, replicates,
    mean_abs_err, normalized_risk, stderr); ``fits`` maps a point label to
    fits of the raw and normalized risks.  ``config_echo`` is reproduced
    verbatim in every output; derived summaries go into ``extras``.
    """

    kind: str
    rows: tuple
    fits: dict
    master_seed: int
    config_echo: dict
    extras: dict = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.extras is None:
            object.__setattr__(self, "extras", {})


def _replicate_rng(master_seed: int, n_index: int, point_index: int, replicate: int) -> np.random.Generator:
    seq = np.random.SeedSequence((master_seed, n_index, point_index, replicate))
    return np.random.Generator(np.random.PCG64(seq))


def _run_tasks(task_fn, task_args, threads: int):
    if threads <= 1:
        return [task_fn(*args) for args in task_args]
    return Parallel(n_jobs=threads, backend="loky")(delayed(task_fn)(*args) for args in task_args)


def _point_label(t) -> str:
    tv = np.asarray(t, dtype=float).reshape(-1)
    return ",".join(f"{v:g}" for v in tv)


def _fit_or_none(pairs, label: str):
    try:
        return rate_fit(pairs)
    except ValueError as err:
        warnings.warn(f"no usable fit for {label}: {err}", stacklevel=2)
        return None


def _estimate_once(kind, sample, spec, config, t, beta, delta):
    if kind == "adaptive":
        return adaptive_estimate(sample, spec, config, t)
    if kind == "classical":
        return classical_estimate(sample, spec, t, beta)
    if kind == "oracle":
        return oracle_estimate(sample, spec, t, delta, beta)
    if kind == "known_beta":
        return known_beta_estimate(sample, spec, config, t, beta)
    if kind == "truth":
        return delta
    if kind == "zero":
        return 0.0
    raise ValueError(f"unknown estimator kind {kind!r}; expected one of {ESTIMATOR_KINDS}")


def _risk_task(density, spec, config, kind, beta, t, truth, n, seed_tuple):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_tuple)))
    sample = draw_sample(density, n, rng)
    value = _estimate_once(kind, sample, spec, config, t, beta, truth)
    return abs(value - truth) ** config.risk_power


def risk_experiment(
    density: DensityModel,
    spec: KernelSpec,
    config: EstimatorConfig,
    points,
    n_list,
    replicates: int,
    estimator_kind: str = "adaptive",
    master_seed: int = 0,
    threads: int = 1,
    normalizer: str | None = None,
    config_echo: dict | None = None,
) -> ExperimentReport:
    """Pointwise risk E|estimate - truth|^r over a grid of sample sizes.

    Parameters
    ----------
    points:
        Evaluation points (each a scalar for d=1 or a d-vector).
    normalizer:
        None (raw risk), "psi" (two-regime rate at the true density value)
        or "psi_tilde" (adaptive envelope at the true value).  A zero
        normalizer value yields NaN with a warning rather than an error.
    estimator_kind:
        One of adaptive | classical | oracle | known_beta | truth | zero.
        The oracle gets delta = p(t); truth/zero exist to test the harness.
    """
    if estimator_kind not in ESTIMATOR_KINDS:
        raise ValueError(f"unknown estimator kind {estimator_kind!r}; expected one of {ESTIMATOR_KINDS}")
    if normalizer not in (None, "psi", "psi_tilde"):
        raise ValueError(f"unknown normalizer {normalizer!r}; expected None, 'psi' or 'psi_tilde'")
    if replicates < 2:
        raise ValueError(f"need at least two replicates for variance estimates, got {replicates}")
    n_list = [int(n) for n in n_list]
    pts = [np.asarray(t, dtype=float).reshape(-1) for t in points]
    beta = np.asarray(density.smoothness, dtype=float)
    exp_id = f"risk/{estimator_kind}/{density.name}"

    tasks = []
    for ni, n in enumerate(n_list):
        for ti, t in enumerate(pts):
            truth = pdf_at(density, t if density.dims > 1 else t[0])
            for rep in range(replicates):
                tasks.append(
                    (density, spec, config, estimator_kind, beta, t if density.dims > 1 else t[0],
                     truth, n, (master_seed, ni, ti, rep))
                )
    results = _run_tasks(_risk_task, tasks, threads)

    rows = []
    series: dict = {_point_label(t): {"risk": [], "norm": []} for t in pts}
    idx = 0
    for ni, n in enumerate(n_list):
        for ti, t in enumerate(pts):
            vals = np.array(results[idx : idx + replicates])
            idx += replicates
            truth = pdf_at(density, t if density.dims > 1 else t[0])
            mean = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("nan")
            if normalizer is None:
                norm_val = 1.0
            elif normalizer == "psi":
                norm_val = rate_psi(truth, beta, n)
            else:
                norm_val = rate_psi_tilde(truth, beta, n)
            if norm_val > 0.0:
                # risk is a mean of |err|^r, so the rate enters at the same power
                normalized = mean / norm_val**config.risk_power
            else:
                warnings.warn(
                    f"normalizer {normalizer} is zero at t={_point_label(t)}; reporting NaN", stacklevel=2
                )
                normalized = float("nan")
            label = _point_label(t)
            rows.append({
                "experiment_id": exp_id,
                "n": n,
                "t": label,
                "replicates": replicates,
                "mean_abs_err": mean,
                "normalized_risk": normalized,
                "stderr": se,
            })
            series[label]["risk"].append((n, mean))
            series[label]["norm"].append((n, normalized))

    fits = {}
    for label, data in series.items():
        fits[label] = {
            "risk": _fit_or_none(data["risk"], f"{exp_id} t={label}"),
            "normalized": (
                _fit_or_none([(n, v) for n, v in data["norm"] if not math.isnan(v)], f"{exp_id} t={label} (normalized)")
                if normalizer is not None
                else None
            ),
        }
    echo = config_echo if config_echo is not None else {
        "kind": "risk", "estimator": estimator_kind, "density": density.name,
        "points": [list(map(float, t)) for t in pts], "n_list": n_list,
        "replicates": replicates, "normalizer": normalizer, "seed": master_seed,
        "estimator_config": {
            "density_sup_bound": config.density_sup_bound,
            "threshold_const": config.threshold_const,
            "risk_power": config.risk_power,
            "isotropic": config.isotropic,
        },
    }
    return ExperimentReport(kind="risk", rows=tuple(rows), fits=fits, master_seed=master_seed, config_echo=echo)


def _support_task(density, spec, config, kind, alpha, box, resolution, truth_set, n, seed_tuple):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_tuple)))
    sample = draw_sample(density, n, rng)
    if kind == "adaptive":
        est_set = plugin_support(sample, spec, config, box, resolution, alpha)
    else:
        shell = rasterize(box, resolution, lambda pts: np.zeros(pts.shape[0], dtype=bool))
        h = classical_bandwidth(n, np.asarray(density.smoothness, dtype=float))
        values = kde(sample, spec, h, cell_centers(shell))
        keep = values >= alpha if alpha > 0 else values > 0.0
        est_set = grid_set(box, resolution, keep.reshape(shell.resolution))
    return symmetric_difference_measure(est_set, truth_set)


def support_experiment(
    density: DensityModel,
    spec: KernelSpec,
    config: EstimatorConfig,
    n_list,
    replicates: int,
    box,
    resolution,
    offset_const: float = 1.0,
    estimator_kind: str = "adaptive",
    master_seed: int = 0,
    threads: int = 1,
    config_echo: dict | None = None,
) -> ExperimentReport:
    """Support recovery risk E[volume(estimate Δ truth)] over sample sizes.

    The threshold is the offset level at each n (constant ``offset_const``);
    `estimator_kind` picks the adaptive plug-in ("adaptive") or the
    classical-bandwidth plug-in ("classical") thresholded at the same level.
    The normalized column divides by the support-recovery rate.
    """
    if estimator_kind not in ("adaptive", "classical"):
        raise ValueError(f"support experiments accept 'adaptive' or 'classical', got {estimator_kind!r}")
    if replicates < 2:
        raise ValueError(f"need at least two replicates for variance estimates, got {replicates}")
    if density.margin is None:
        raise ValueError(f"density {density.name!r} carries no margin statistics")
    n_list = [int(n) for n in n_list]
    beta = float(density.smoothness[0])
    gamma = density.margin.exponent
    truth_set = true_support(density.pdf, box, resolution)
    exp_id = f"support/{estimator_kind}/{density.name}"

    tasks = []
    for ni, n in enumerate(n_list):
        alpha = offset_level(n, beta, density.holder_const, density.dims, offset_const)
        for rep in range(replicates):
            tasks.append((density, spec, config, estimator_kind, alpha, box, resolution,
                          truth_set, n, (master_seed, ni, 0, rep)))
    results = _run_tasks(_support_task, tasks, threads)

    rows = []
    fit_pairs = {"risk": [], "norm": []}
    idx = 0
    for ni, n in enumerate(n_list):
        vals = np.array(results[idx : idx + replicates])
        idx += replicates
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("nan")
        rate = support_rate(beta, gamma, density.dims, n)
        rows.append({
            "experiment_id": exp_id,
            "n": n,
            "t": "support",
            "replicates": replicates,
            "mean_abs_err": mean,
            "normalized_risk": mean / rate,
            "stderr": se,
        })
        fit_pairs["risk"].append((n, mean))
        fit_pairs["norm"].append((n, mean / rate))
    fits = {"support": {
        "risk": _fit_or_none(fit_pairs["risk"], exp_id),
        "normalized": _fit_or_none(fit_pairs["norm"], f"{exp_id} (normalized)"),
    }}
    echo = config_echo if config_echo is not None else {
        "kind": "support", "estimator": estimator_kind, "density": density.name,
        "n_list": n_list, "replicates": replicates, "box": [list(map(float, ax)) for ax in box],
        "resolution": resolution if not np.iterable(resolution) else list(resolution),
        "offset_const": offset_const, "seed": master_seed,
    }
    return ExperimentReport(kind="support", rows=tuple(rows), fits=fits, master_seed=master_seed, config_echo=echo)


def _supereff_task(model, spec, config, point, truth, n, seed_tuple):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_tuple)))
    sample = draw_sample(model, n, rng)
    value = adaptive_estimate(sample, spec, config, point)
    return abs(value - truth)


def superefficiency_experiment(
    spec: KernelSpec,
    n_list,
    replicates: int,
    smooth_index: float = 2.0,
    rough_index: float = 1.0,
    dip_const: float = 0.01,
    threshold_const: float = 1.0,
    master_seed: int = 0,
    threads: int = 1,
    config_echo: dict | None = None,
) -> ExperimentReport:
    """Adaptive risk on the two-density pair, tracked across sample sizes.

    For each n the pair is rebuilt (its geometry is n-dependent), the
    adaptive estimator runs at the probe point under both densities, and
    rows report the risk next to the rate the theory allows at the local
    density level (risk normalized by rate_psi at that level).
    """
    n_list = [int(n) for n in n_list]
    rows = []
    series: dict = {"base": {"risk": [], "norm": []}, "perturbed": {"risk": [], "norm": []}}
    for ni, n in enumerate(n_list):
        pair = superefficiency_pair(n, smooth_index, rough_index, dip_const=dip_const)
        for pi, (label, model, truth, local_beta) in enumerate([
            ("base", pair.base, pair.peak_p, smooth_index),
            ("perturbed", pair.perturbed, pair.peak_q, rough_index),
        ]):
            config = EstimatorConfig(
                density_sup_bound=1.1 * model.sup_density,
                threshold_const=threshold_const,
            )
            tasks = [
                (model, spec, config, pair.point, truth, n, (master_seed, ni, pi, rep))
                for rep in range(replicates)
            ]
            vals = np.array(_run_tasks(_supereff_task, tasks, threads))
            mean = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("nan")
            rate = rate_psi(truth, local_beta, n)
            rows.append({
                "experiment_id": f"supereff/{label}",
                "n": n,
                "t": label,
                "replicates": replicates,
                "mean_abs_err": mean,
                "normalized_risk": mean / rate if rate > 0 else float("nan"),
                "stderr": se,
            })
            series[label]["risk"].append((n, mean))
            series[label]["norm"].append((n, mean / rate if rate > 0 else float("nan")))
    fits = {
        label: {
            "risk": _fit_or_none(data["risk"], f"supereff {label}"),
            "normalized": _fit_or_none(
                [(n, v) for n, v in data["norm"] if not math.isnan(v)], f"supereff {label} (normalized)"
            ),
        }
        for label, data in series.items()
    }
    echo = config_echo if config_echo is not None else {
        "kind": "supereff", "n_list": n_list, "replicates": replicates,
        "smooth_index": smooth_index, "rough_index": rough_index,
        "dip_const": dip_const, "threshold_const": threshold_const, "seed": master_seed,
    }
    return ExperimentReport(kind="supereff", rows=tuple(rows), fits=fits, master_seed=master_seed, config_echo=echo)


def threshold_scan(
    density: DensityModel,
    spec: KernelSpec,
    base_config: EstimatorConfig,
    point,
    n_list,
    replicates: int,
    candidates=(1.0, 2.0, 4.0, 8.0),
    master_seed: int = 0,
    threads: int = 1,
    config_echo: dict | None = None,
) -> ExperimentReport:
    """Sweep the comparison-threshold constant and fit a slope for each.

    Used for calibration: the row set carries one point-series per
    candidate, labelled ``c=<value>``, and the steepest fitted slope marks
    the winner (recorded in the echo).
    """
    rows = []
    fits = {}
    best = (None, math.inf)
    for cand in candidates:
        config = EstimatorConfig(
            density_sup_bound=base_config.density_sup_bound,
            threshold_const=float(cand),
            risk_power=base_config.risk_power,
            isotropic=base_config.isotropic,
            trunc_log_exp=base_config.trunc_log_exp,
            beta_range=base_config.beta_range,
            L_range=base_config.L_range,
        )
        # identical seeds across candidates: the scan is paired on samples
        sub = risk_experiment(
            density, spec, config, [point], n_list, replicates,
            estimator_kind="adaptive", master_seed=master_seed, threads=threads,
        )
        label = f"c={cand:g}"
        for row in sub.rows:
            rows.append({**row, "experiment_id": f"calibrate/{label}", "t": label})
        fit = next(iter(sub.fits.values()))["risk"]
        fits[label] = {"risk": fit, "normalized": None}
        if fit is not None and fit.slope < best[1]:
            best = (float(cand), fit.slope)
    echo = config_echo if config_echo is not None else {
        "kind": "calibrate", "density": density.name, "point": _point_label(point),
        "n_list": [int(n) for n in n_list], "replicates": replicates,
        "candidates": [float(c) for c in candidates], "seed": master_seed,
    }
    extras = {
        "winner_threshold_const": best[0],
        "winner_slope": best[1] if best[0] is not None else None,
    }
    return ExperimentReport(
        kind="calibrate", rows=tuple(rows), fits=fits, master_seed=master_seed,
        config_echo=echo, extras=extras,
    )


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

def version_string() -> str:
    """git-describe of the working tree, falling back to package metadata."""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    try:
        from importlib.metadata import version

        return version("lodens")
    except Exception:
        return "unknown"


_CSV_COLUMNS = ("experiment_id", "n", "t", "replicates", "mean_abs_err", "normalized_risk", "stderr")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(report: ExperimentReport, path) -> None:
    """Rows as UTF-8 CSV with `# key=value` provenance header lines.

    Fields containing commas (experiment ids embed density names, point
    labels are comma-joined coordinates) are quoted per the usual CSV rules.
    """
    import csv
    import io

    buf = io.StringIO()
    buf.write(f"# version={version_string()}\n")
    buf.write(f"# kind={report.kind}\n")
    buf.write(f"# seed={report.master_seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in report.rows:
        writer.writerow([_fmt(row[c]) for c in _CSV_COLUMNS])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _fit_payload(fit: FitResult | None):
    if fit is None:
        return None
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "slope_se": fit.slope_se,
        "slope_ci_2se": [fit.slope - 2.0 * fit.slope_se, fit.slope + 2.0 * fit.slope_se],
        "n_points": fit.n_points,
    }


def write_report_json(report: ExperimentReport, path) -> None:
    """JSON summary: fits with 2-se slope intervals, config echo, seed."""
    import json

    payload = {
        "version": version_string(),
        "kind": report.kind,
        "master_seed": report.master_seed,
        "config": report.config_echo,
        "extras": report.extras,
        "fits": {
            label: {key: _fit_payload(fit) for key, fit in pair.items()}
            for label, pair in report.fits.items()
        },
        "rows": list(report.rows),
    }
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def write_plot_tsv(report: ExperimentReport, path) -> None:
    """Plot-ready TSV: point label, log n, log mean risk (natural logs)."""
    lines = [f"# version={version_string()}", "t\tlog_n\tlog_mean_abs_err"]
    for row in report.rows:
        if row["mean_abs_err"] > 0:
            lines.append(
                f"{row['t']}\t{_fmt(math.log(row['n']))}\t{_fmt(math.log(row['mean_abs_err']))}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
