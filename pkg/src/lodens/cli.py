"""Command-line entry point.

    lodens <command> --config <file> [--output-dir <dir>] [--threads N]

Commands: estimate, risk-sim, support-sim, supereff-sim, calibrate.  Configs
are strict JSON — unknown keys are rejected so typos cannot silently change
an experiment — and the parsed config is echoed verbatim into every output
file.  Exit codes: 0 success, 2 config/validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .densities import margin_family, triangular_density, uniform_density
from .estimator import EstimatorConfig, select_bandwidth
from .kernels import epanechnikov_kernel, holder_kernel, triangular_kernel
from .simharness import (
    risk_experiment,
    superefficiency_experiment,
    support_experiment,
    threshold_scan,
    version_string,
    write_plot_tsv,
    write_report_csv,
    write_report_json,
)

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """A config file failed validation."""


def _reject_unknown(section: dict, allowed, where: str) -> None:
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in {where}; allowed: {sorted(allowed)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return section[key]


def _build_kernel(section) -> object:
    if not isinstance(section, dict):
        raise ConfigError("'kernel' must be an object like {\"name\": \"triangular\"}")
    name = _require(section, "name", "kernel")
    if name == "triangular":
        _reject_unknown(section, {"name", "dims"}, "kernel")
        return triangular_kernel(int(section.get("dims", 1)))
    if name == "epanechnikov":
        _reject_unknown(section, {"name", "dims"}, "kernel")
        return epanechnikov_kernel(int(section.get("dims", 1)))
    if name == "holder":
        _reject_unknown(section, {"name", "beta"}, "kernel")
        return holder_kernel(float(_require(section, "beta", "kernel")))
    raise ConfigError(f"unknown kernel {name!r}; expected triangular, epanechnikov or holder")


def _build_density(section) -> object:
    if not isinstance(section, dict):
        raise ConfigError("'density' must be an object like {\"name\": \"triangular\"}")
    name = _require(section, "name", "density")
    if name == "triangular":
        _reject_unknown(section, {"name", "center", "halfwidth"}, "density")
        return triangular_density(float(section.get("center", 0.0)), float(section.get("halfwidth", 1.0)))
    if name == "uniform":
        _reject_unknown(section, {"name", "lo", "hi"}, "density")
        return uniform_density(float(section.get("lo", -1.0)), float(section.get("hi", 1.0)))
    if name == "margin_family":
        _reject_unknown(section, {"name", "beta", "gamma", "dims"}, "density")
        return margin_family(
            float(_require(section, "beta", "density")),
            float(_require(section, "gamma", "density")),
            int(section.get("dims", 1)),
        )
    raise ConfigError(f"unknown density {name!r}; expected triangular, uniform or margin_family")


_ESTIMATOR_KEYS = {
    "kind", "density_sup_bound", "threshold_const", "risk_power",
    "isotropic", "trunc_log_exp", "beta_range", "L_range",
}


def _build_estimator(section, default_kind: str = "adaptive") -> tuple:
    if not isinstance(section, dict):
        raise ConfigError("'estimator' must be an object")
    _reject_unknown(section, _ESTIMATOR_KEYS, "estimator")
    kind = section.get("kind", default_kind)
    kwargs = {}
    if "density_sup_bound" not in section:
        raise ConfigError("estimator needs 'density_sup_bound' (a known upper bound on the density)")
    kwargs["density_sup_bound"] = float(section["density_sup_bound"])
    for key, cast in (
        ("threshold_const", float), ("risk_power", float),
        ("isotropic", bool), ("trunc_log_exp", float),
    ):
        if key in section:
            kwargs[key] = cast(section[key])
    for key in ("beta_range", "L_range"):
        if key in section:
            kwargs[key] = tuple(float(v) for v in section[key])
    try:
        return kind, EstimatorConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return cfg


def _read_sample(path: str) -> np.ndarray:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read sample file {path}: {err}") from err
    rows = [line for line in raw.splitlines() if line.strip()]
    if len(rows) < 2:
        raise ConfigError(f"sample file {path} has {len(rows)} observation(s); n >= 2 required")
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in rows])
    except ValueError as err:
        raise ConfigError(f"sample file {path} is not numeric CSV: {err}") from err
    if not np.all(np.isfinite(data)):
        raise ConfigError(f"sample file {path} contains non-finite values")
    return data


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _cmd_estimate(cfg: dict, out_dir: Path | None, threads: int) -> None:
    _reject_unknown(cfg, {"sample_file", "kernel", "estimator", "point"}, "config")
    sample = _read_sample(_require(cfg, "sample_file", "config"))
    spec = _build_kernel(_require(cfg, "kernel", "config"))
    kind, config = _build_estimator(_require(cfg, "estimator", "config"))
    if kind != "adaptive":
        raise ConfigError("the estimate command runs the adaptive estimator; drop 'kind'")
    point = np.asarray(_require(cfg, "point", "config"), dtype=float)
    if sample.shape[1] != spec.dims:
        raise ConfigError(f"sample has {sample.shape[1]} column(s) but the kernel has {spec.dims} axes")
    trace = select_bandwidth(sample, spec, config, point if spec.dims > 1 else float(point))
    level = trace.indices[trace.chosen].tolist()
    print(f"[estimate] value={trace.estimate!r}")
    print(
        f"[trace] grid_rows={trace.indices.shape[0]} admissible={int(trace.admissible.sum())} "
        f"chosen_level={level} bandwidth={trace.bandwidths[trace.chosen].tolist()} "
        f"fallback={trace.fallback}"
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "version": version_string(),
            "config": cfg,
            "estimate": trace.estimate,
            "chosen_level": level,
            "bandwidth": trace.bandwidths[trace.chosen].tolist(),
            "admissible_rows": int(trace.admissible.sum()),
            "grid_rows": int(trace.indices.shape[0]),
            "fallback": trace.fallback,
        }
        target = out_dir / "estimate.json"
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
        print(f"[write] {target}")


def _emit(report, out_dir: Path | None, stem: str) -> None:
    for label, pair in report.fits.items():
        fit = pair.get("risk")
        if fit is not None:
            print(
                f"[fit] {label}: slope={fit.slope:.4f} (2se ±{2.0 * fit.slope_se:.4f}) "
                f"r2={fit.r_squared:.4f} points={fit.n_points}"
            )
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}_summary.json"
    tsv_path = out_dir / f"{stem}_plot.tsv"
    write_report_csv(report, csv_path)
    write_report_json(report, json_path)
    write_plot_tsv(report, tsv_path)
    for p in (csv_path, json_path, tsv_path):
        print(f"[write] {p}")


_RISK_KEYS = {"seed", "density", "kernel", "estimator", "points", "n_list", "replicates", "normalizer"}


def _cmd_risk_sim(cfg: dict, out_dir: Path | None, threads: int) -> None:
    _reject_unknown(cfg, _RISK_KEYS, "config")
    seed = int(_require(cfg, "seed", "config"))
    density = _build_density(_require(cfg, "density", "config"))
    spec = _build_kernel(_require(cfg, "kernel", "config"))
    kind, config = _build_estimator(_require(cfg, "estimator", "config"))
    points = _require(cfg, "points", "config")
    n_list = _require(cfg, "n_list", "config")
    replicates = int(_require(cfg, "replicates", "config"))
    normalizer = cfg.get("normalizer")
    print(f"[run] risk-sim: {len(n_list)} sample sizes x {len(points)} points x {replicates} replicates")
    report = risk_experiment(
        density, spec, config, points, n_list, replicates,
        estimator_kind=kind, master_seed=seed, threads=threads,
        normalizer=normalizer, config_echo=cfg,
    )
    _emit(report, out_dir, "risk_sim")


_SUPPORT_KEYS = {"seed", "density", "kernel", "estimator", "n_list", "replicates", "box", "resolution", "offset_const"}


def _cmd_support_sim(cfg: dict, out_dir: Path | None, threads: int) -> None:
    _reject_unknown(cfg, _SUPPORT_KEYS, "config")
    seed = int(_require(cfg, "seed", "config"))
    density = _build_density(_require(cfg, "density", "config"))
    spec = _build_kernel(_require(cfg, "kernel", "config"))
    kind, config = _build_estimator(_require(cfg, "estimator", "config"))
    n_list = _require(cfg, "n_list", "config")
    replicates = int(_require(cfg, "replicates", "config"))
    box = _require(cfg, "box", "config")
    resolution = _require(cfg, "resolution", "config")
    offset_const = float(cfg.get("offset_const", 1.0))
    print(f"[run] support-sim: {len(n_list)} sample sizes x {replicates} replicates at resolution {resolution}")
    report = support_experiment(
        density, spec, config, n_list, replicates, box, resolution,
        offset_const=offset_const, estimator_kind=kind,
        master_seed=seed, threads=threads, config_echo=cfg,
    )
    _emit(report, out_dir, "support_sim")


_SUPEREFF_KEYS = {"seed", "kernel", "n_list", "replicates", "smooth_index", "rough_index", "dip_const", "threshold_const"}


def _cmd_supereff_sim(cfg: dict, out_dir: Path | None, threads: int) -> None:
    _reject_unknown(cfg, _SUPEREFF_KEYS, "config")
    seed = int(_require(cfg, "seed", "config"))
    spec = _build_kernel(_require(cfg, "kernel", "config"))
    n_list = _require(cfg, "n_list", "config")
    replicates = int(_require(cfg, "replicates", "config"))
    print(f"[run] supereff-sim: {len(n_list)} sample sizes x 2 densities x {replicates} replicates")
    report = superefficiency_experiment(
        spec, n_list, replicates,
        smooth_index=float(cfg.get("smooth_index", 2.0)),
        rough_index=float(cfg.get("rough_index", 1.0)),
        dip_const=float(cfg.get("dip_const", 0.01)),
        threshold_const=float(cfg.get("threshold_const", 1.0)),
        master_seed=seed, threads=threads, config_echo=cfg,
    )
    _emit(report, out_dir, "supereff_sim")


_CALIBRATE_KEYS = {"seed", "density", "kernel", "estimator", "point", "n_list", "replicates", "candidates"}


def _cmd_calibrate(cfg: dict, out_dir: Path | None, threads: int) -> None:
    _reject_unknown(cfg, _CALIBRATE_KEYS, "config")
    seed = int(_require(cfg, "seed", "config"))
    density = _build_density(_require(cfg, "density", "config"))
    spec = _build_kernel(_require(cfg, "kernel", "config"))
    _, config = _build_estimator(_require(cfg, "estimator", "config"))
    point = _require(cfg, "point", "config")
    n_list = _require(cfg, "n_list", "config")
    replicates = int(_require(cfg, "replicates", "config"))
    candidates = cfg.get("candidates", [1.0, 2.0, 4.0, 8.0])
    print(f"[run] calibrate: candidates {candidates}")
    report = threshold_scan(
        density, spec, config, point, n_list, replicates,
        candidates=candidates, master_seed=seed, threads=threads, config_echo=cfg,
    )
    print(
        f"[winner] threshold_const={report.extras['winner_threshold_const']} "
        f"slope={report.extras['winner_slope']}"
    )
    _emit(report, out_dir, "calibrate")


_HANDLERS = {
    "estimate": _cmd_estimate,
    "risk-sim": _cmd_risk_sim,
    "support-sim": _cmd_support_sim,
    "supereff-sim": _cmd_supereff_sim,
    "calibrate": _cmd_calibrate,
}


def _parse_args(argv):
    parser = argparse.ArgumentParser(prog="lodens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--output-dir", default=None, help="directory for CSV/JSON/TSV outputs")
        p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv)
    out_dir = Path(args.output_dir) if args.output_dir is not None else None
    print(f"[version] lodens {version_string()}")
    try:
        _HANDLERS[args.command](_load_config(args.config), out_dir, args.threads)
    except ConfigError as err:
        print(f"[error] {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"[error] {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 — the CLI must not traceback at users
        print(f"[error] unexpected failure: {err!r}", file=sys.stderr)
        return 3
    print("[done] ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
