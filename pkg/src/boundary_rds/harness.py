"""Command-line harness: config loading, experiment dispatch, persistence.

Every experiment reads one JSON config (scalar fields may be overridden with
``--set dotted.path=value``), derives all randomness from ``noise.seed`` and
writes its numeric outputs with round-trip float formatting, so reruns of the
same config produce byte-identical files.  ``manifest.json`` records the
config hash, versions, seeds, wall time and output hashes.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import platform
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import jsonschema
import numpy as np
import scipy

from . import __version__
from .bounds_lab import (
    canonical_spectrum,
    certify_ensemble,
    kernel_integrability_check,
    planar_spectrum,
    series_r_grid,
    trace_class_diagnostic,
)
from .cocycle_solver import cocycle_apply, solve_random_pde
from .errors import NumericalRefusal
from .met_lyapunov import lyapunov_spectrum, required_span, spectrum_report
from .noise_shift import coarsen, required_window, sample_path
from .nonlinearity import from_config
from .spectral_core import build_model, model_summary
from .stationary_manifolds import (
    center_chart,
    chart_window,
    decay_rate_details,
    default_window,
    equilibrium_point,
    stable_chart,
    stationary_point,
    tangency_slope,
    unstable_chart,
)

EXPERIMENTS = ("simulate", "lyapunov", "stationary", "manifold", "certify-bounds", "convergence")
EXIT_OK, EXIT_SCHEMA, EXIT_REFUSAL, EXIT_IO = 0, 2, 3, 4
PLOT_KINDS = ("exponent_convergence", "decay_fit", "chart_slice", "bound_margins")


class ConfigError(ValueError):
    """Schema violation or inconsistent configuration; carries field-path diagnostics."""

    def __init__(self, message: str, problems: Optional[list] = None):
        super().__init__(message)
        self.problems = problems or []


# ---------------------------------------------------------------------------
# configuration


def _load_data(name: str) -> dict:
    return json.loads(resources.files("boundary_rds").joinpath("data", name).read_text())


def schema() -> dict:
    return _load_data("config_schema.json")


def default_config() -> dict:
    return _load_data("default_config.json")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides: Iterable[str]) -> dict:
    """Return a copy with each ``a.b.c=value`` applied; values are parsed as JSON when possible."""
    out = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(text)
    return out


def _error_path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = [name for name in err.validator_value if name not in err.instance and repr(name) in err.message]
        parts.append(missing[0] if missing else "?")
    return "/".join(parts) or "<root>"


def validate_config(config: dict) -> dict:
    """Schema check plus the cross-field constraints of the modules; returns the filled config."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        problems = [{"path": _error_path(e), "message": e.message} for e in errors]
        raise ConfigError("configuration does not match the schema", problems)
    cfg = copy.deepcopy(config)
    defaults = default_config()
    cfg["model"] = {**{"beta": 0.5, "q_star": 1.0, "reg_shift": 0.0}, **cfg["model"]}
    cfg["noise"] = {**{"q": [1.0, 1.0]}, **cfg["noise"]}
    cfg["run"] = {**defaults["run"], **cfg.get("run", {})}
    m = cfg["model"]
    problems = []
    if m["q_star"] * m["beta"] >= 1:
        problems.append({"path": "model/q_star", "message": "q_star * beta must be < 1"})
    run = cfg["run"]
    dt = cfg["noise"]["dt"]
    for key, v in [("t0", run["t0"])] + [("t0_list", v) for v in run["t0_list"]]:
        k = v / dt
        if abs(k - round(k)) > 1e-9 * k or round(k) < 1:
            problems.append({"path": f"run/{key}", "message": f"{v} is not a positive multiple of noise.dt"})
    if "xi" in run and len(run["xi"]) != m["n_modes"]:
        problems.append({"path": "run/xi", "message": "needs one entry per mode"})
    nl = cfg["nonlinearity"]
    if nl["preset"] == "constant_mode" and nl.get("mode", 1) >= m["n_modes"]:
        problems.append({"path": "nonlinearity/mode", "message": "mode index out of range"})
    if nl["preset"] == "custom" and len(nl["table"]["x"]) != len(nl["table"]["y"]):
        problems.append({"path": "nonlinearity/table", "message": "x and y must have equal length"})
    if problems:
        raise ConfigError("configuration is inconsistent", problems)
    return cfg


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, header: list, rows: Iterable) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def write_json(path: Path, obj) -> Path:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def emit_plot_data(results, kind: str, out_dir) -> Path:
    """Tidy CSV (one observation per row) for the given plot kind."""
    out_dir = Path(out_dir)
    if kind == "exponent_convergence":
        header = ["block", "k", "estimate", "ci"]
        rows = []
        if results:
            curves, ci = results["curves"], results["ci"]
            for row in curves:
                for k, v in enumerate(row[1:]):
                    rows.append((int(row[0]), k, float(v), float(ci[k])))
    elif kind == "decay_fit":
        header = ["n", "log_ratio", "fit"]
        rows = []
        if results:
            ratios, rate = np.asarray(results["ratios"]), results["rate"]
            for n, r in enumerate(ratios):
                rows.append((n, math.log(r) if r > 0 else -math.inf, rate * n))
    elif kind == "chart_slice":
        header = ["s", "component", "graph_value"]
        rows = []
        if results:
            for s, vals in zip(results["s"], results["values"]):
                for c, v in enumerate(vals):
                    rows.append((float(s), c, float(v)))
    elif kind == "bound_margins":
        header = ["name", "sample", "t", "lhs", "rhs", "margin", "pass"]
        rows = []
        for inst in results or []:
            rows.append((inst["name"], inst.get("sample", 0), inst.get("t", 0.0), inst["lhs"], inst["rhs"], inst["margin"], inst["pass"]))
        rows.sort(key=lambda r: (r[0], r[1]))
    else:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    return write_csv(out_dir / f"{kind}.csv", header, rows)


# ---------------------------------------------------------------------------
# experiments


class Context:
    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        m = cfg["model"]
        self.model = build_model(m["n_modes"], m["mu"], m["beta"], m["q_star"], m["reg_shift"])
        self.nonlin = from_config(cfg["nonlinearity"], self.model.n_modes)
        self.run = cfg["run"]
        self.dt = cfg["noise"]["dt"]
        self.files: list[Path] = []

    def path(self, t_minus: float, t_plus: float):
        nz = self.cfg["noise"]
        lo = nz.get("t_minus", -_round_up(-t_minus, self.dt))
        hi = nz.get("t_plus", _round_up(t_plus, self.dt))
        return sample_path(self.model, self.dt, lo, hi, nz["q"], nz["seed"])

    def xi(self) -> np.ndarray:
        return np.array(self.run.get("xi", [0.0] * self.model.n_modes), dtype=float)

    def emit(self, p: Path) -> None:
        self.files.append(p)


def _round_up(x: float, dt: float) -> float:
    return max(1, math.ceil(x / dt - 1e-9)) * dt


def _base_orbit(ctx: Context, path, lo: float, hi: float):
    """Stationary orbit on [lo, hi]; None when the nonlinearity is affine and no orbit is needed."""
    if ctx.nonlin.is_affine:
        return None
    if not np.any(path.q) and np.abs(ctx.nonlin.apply(np.zeros(ctx.model.n_modes))).max() == 0:
        return equilibrium_point(ctx.model, path, ctx.nonlin, (lo, hi))
    return stationary_point(
        ctx.model, path, ctx.nonlin, window=ctx.run.get("window"), span=(lo, hi), allow_dichotomy=ctx.run["allow_dichotomy"]
    )


def _window(ctx: Context) -> float:
    w = ctx.run.get("window")
    return default_window(ctx.model) if w is None else w


def exp_simulate(ctx: Context) -> dict:
    t_end = ctx.run["t_end"]
    path = ctx.path(-(required_window(ctx.model) + ctx.dt), t_end)
    traj = solve_random_pde(ctx.model, path, ctx.nonlin, ctx.xi(), (0.0, t_end))
    X = traj.X
    ctx.emit(write_csv(ctx.out / "trajectory.csv", ["t"] + [f"x{k}" for k in range(X.shape[1])], ([t, *x] for t, x in zip(traj.times, X))))
    summary = {"final_state": X[-1], "final_norm": float(np.linalg.norm(X[-1])), "solver": traj.meta, "model": model_summary(ctx.model)}
    ctx.emit(write_json(ctx.out / "summary.json", summary))
    return summary


def exp_lyapunov(ctx: Context) -> dict:
    t0, n = ctx.run["t0"], ctx.run["n_steps"]
    burn = ctx.run.get("burn_in")
    lo, hi = required_span(t0, n, burn)
    w = _window(ctx)
    path = ctx.path(lo - w - ctx.dt, hi + w + ctx.dt)
    Z = _base_orbit(ctx, path, lo, hi)
    spec = lyapunov_spectrum(ctx.model, path, ctx.nonlin, Z, t0, n, burn_in=burn)
    report = spectrum_report(spec)
    ctx.emit(write_json(ctx.out / "spectrum.json", report))
    rows = []
    for i, (e, c, m) in enumerate(zip(spec.exponents, spec.ci, spec.multiplicities)):
        cls = next(k for k, v in spec.splitting.items() if i in v)
        rows.append((i, e, c, m, cls))
    ctx.emit(write_csv(ctx.out / "exponents.csv", ["index", "exponent", "ci", "multiplicity", "class"], rows))
    ctx.emit(emit_plot_data({"curves": spec.curves, "ci": spec.directional_ci}, "exponent_convergence", ctx.out))
    return report


def exp_stationary(ctx: Context) -> dict:
    t_end = ctx.run["t_end"]
    w = _window(ctx)
    path = ctx.path(-w - ctx.dt, t_end + w + ctx.dt)
    sp = stationary_point(ctx.model, path, ctx.nonlin, window=ctx.run.get("window"), span=(0.0, t_end), allow_dichotomy=ctx.run["allow_dichotomy"])
    defects = []
    for t in (0.1, 0.5, 1.0):
        if t <= t_end + 1e-12 and abs(t / ctx.dt - round(t / ctx.dt)) < 1e-9:
            moved = cocycle_apply(ctx.model, path, ctx.nonlin, t, sp.Z)
            defects.append({"t": t, "defect": float(np.linalg.norm(moved.coeffs - sp.at(t).coeffs))})
    report = {
        "Z": sp.Z.coeffs,
        "window": sp.window,
        "residual": sp.residual,
        "contraction_margin": sp.contraction_margin,
        "paper_margin": sp.paper_margin,
        "stationarity_defects": defects,
        "meta": sp.meta,
    }
    ctx.emit(write_json(ctx.out / "stationary.json", report))
    ctx.emit(write_csv(ctx.out / "orbit.csv", ["t"] + [f"x{k}" for k in range(sp.orbit.shape[1])], ([t, *x] for t, x in zip(sp.times, sp.orbit))))
    return report


def exp_manifold(ctx: Context) -> dict:
    t0, n = ctx.run["t0"], ctx.run["n_steps"]
    kind = ctx.run["chart"]
    burn = ctx.run.get("burn_in")
    lo, hi = required_span(t0, n, burn)
    w = _window(ctx)
    # generous horizon; the chart range is only known after the spectrum
    reach = 4000 * t0
    path = ctx.path(min(lo, -reach) - w - ctx.dt, max(hi, reach) + w + ctx.dt)
    Z = _base_orbit(ctx, path, lo, hi)
    spec = lyapunov_spectrum(ctx.model, path, ctx.nonlin, Z, t0, n, burn_in=burn)
    k_lo, k_hi, rate = chart_window(kind, spec)
    span = (min(lo, k_lo * t0), max(hi, (k_hi + 1) * t0))
    Z = _base_orbit(ctx, path, *span)
    if Z is None:
        Z = equilibrium_like(ctx, path, span)
    ups = ctx.run["upsilon"]
    radius = ctx.run["radius"]
    if kind == "stable":
        chart = stable_chart(ctx.model, path, ctx.nonlin, Z, spec, ups, radius)
    elif kind == "unstable":
        chart = unstable_chart(ctx.model, path, ctx.nonlin, Z, spec, ups, radius)
    else:
        chart = center_chart(ctx.model, path, ctx.nonlin, Z, spec, radius, upsilon=ups if ups < rate else None)
    report = chart.to_json()
    report["spectrum"] = spectrum_report(spec)
    s = np.linspace(-chart.radius, chart.radius, 21)
    pts = np.zeros((s.size, chart.dim))
    pts[:, 0] = s
    vals = chart.solve_at(pts) @ chart.coords[chart.dim :].T
    ctx.emit(emit_plot_data({"s": s, "values": vals}, "chart_slice", ctx.out))
    if kind == "stable":
        xi = np.zeros(chart.dim)
        xi[0] = 0.5 * chart.radius
        det = decay_rate_details(ctx.model, path, ctx.nonlin, chart, xi, 100)
        report["decay_rate"] = {"rate": det["rate"], "bound": t0 * spec.mu_stable_top, "truncated": det["truncated"]}
        ctx.emit(emit_plot_data(det, "decay_fit", ctx.out))
    elif kind == "center":
        ts = tangency_slope(chart, ctx.run["radii"])
        report["tangency"] = {"slope": ts["slope"], "graph_norms": ts["graph_norms"], "radii": ts["radii"]}
    ctx.emit(write_json(ctx.out / "chart.json", report))
    return report


def equilibrium_like(ctx: Context, path, span):
    """Base orbit for affine g: the stationary point when it exists, else the zero equilibrium."""
    try:
        return stationary_point(ctx.model, path, ctx.nonlin, window=ctx.run.get("window"), span=span, allow_dichotomy=ctx.run["allow_dichotomy"])
    except NumericalRefusal:
        return equilibrium_point(ctx.model, path, ctx.nonlin, span)


def exp_certify(ctx: Context) -> dict:
    nz = ctx.cfg["noise"]
    ens = certify_ensemble(ctx.model, ctx.nonlin, n_samples=ctx.run["ensemble"], t_max=ctx.run["t_max"], dt=ctx.dt, q=nz["q"], seed=nz["seed"])
    grid = series_r_grid(range(1, 11), (0.3, 0.5, 0.7))
    kernel = kernel_integrability_check(ctx.model, ctx.model.q_star, 1.0)
    trace = {"canonical": trace_class_diagnostic(canonical_spectrum, 1.0), "planar": trace_class_diagnostic(planar_spectrum, 1.0)}
    failures = ens["failures"] + sum(not r["pass"] for r in grid) + (0 if kernel["finite"] else 1)
    failures += (0 if ens["lp_sup_b"]["stable"] else 1) + (0 if trace["canonical"]["converges"] else 1)
    report = {
        "failures": failures,
        "ensemble": {k: v for k, v in ens.items() if k != "instances"},
        "series_vs_R": grid,
        "kernel_integrability": kernel,
        "trace_class": trace,
    }
    ctx.emit(write_json(ctx.out / "certification.json", report))
    ctx.emit(emit_plot_data(ens["instances"], "bound_margins", ctx.out))
    return report


def exp_convergence(ctx: Context) -> dict:
    """dt-refinement of the cocycle and t0-sensitivity of the exponents."""
    t_end = ctx.run["t_end"]
    levels = ctx.run["refinements"]
    fine_dt = ctx.dt / 2 ** (levels - 1)
    nz = ctx.cfg["noise"]
    hist = _round_up(required_window(ctx.model), ctx.dt)
    fine = sample_path(ctx.model, fine_dt, -hist, _round_up(t_end, ctx.dt), nz["q"], nz["seed"])
    xi = ctx.xi()
    ref = cocycle_apply(ctx.model, fine, ctx.nonlin, t_end, xi).coeffs
    rows = []
    dt_rows = []
    for j in range(1, levels):
        p = coarsen(fine, 2**j)
        err = float(np.linalg.norm(cocycle_apply(ctx.model, p, ctx.nonlin, t_end, xi).coeffs - ref))
        dt_rows.append({"dt": p.dt, "error": err})
        rows.append(("cocycle_error", p.dt, err))
    t0_rows = []
    n = ctx.run["n_steps"]
    for t0 in ctx.run["t0_list"]:
        sub = Context(ctx.cfg, ctx.out)
        sub.run = {**ctx.run, "t0": t0}
        lo, hi = required_span(t0, n)
        w = _window(ctx)
        path = sub.path(lo - w - ctx.dt, hi + w + ctx.dt)
        Z = _base_orbit(sub, path, lo, hi)
        spec = lyapunov_spectrum(ctx.model, path, ctx.nonlin, Z, t0, n)
        t0_rows.append({"t0": t0, "exponents": spec.directional, "ci": spec.directional_ci})
        for k, (e, c) in enumerate(zip(spec.directional, spec.directional_ci)):
            rows.append((f"exponent_{k}", t0, e))
            rows.append((f"exponent_ci_{k}", t0, c))
    report = {"dt_refinement": dt_rows, "t0_sensitivity": t0_rows}
    ctx.emit(write_csv(ctx.out / "convergence.csv", ["quantity", "parameter", "value"], rows))
    ctx.emit(write_json(ctx.out / "convergence.json", report))
    return report


RUNNERS = {
    "simulate": exp_simulate,
    "lyapunov": exp_lyapunov,
    "stationary": exp_stationary,
    "manifold": exp_manifold,
    "certify-bounds": exp_certify,
    "convergence": exp_convergence,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: dict, out_dir, experiment: Optional[str] = None) -> dict:
    """Validate, run and persist one experiment; returns the manifest."""
    cfg = validate_config(config)
    if experiment is not None:
        cfg["run"]["experiment"] = experiment
    name = cfg["run"]["experiment"]
    if name not in RUNNERS:
        raise ConfigError(f"unknown experiment {name!r}", [{"path": "run/experiment", "message": "unknown"}])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out)
    start = time.perf_counter()
    RUNNERS[name](ctx)
    wall = time.perf_counter() - start
    manifest = {
        "experiment": name,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seeds": {"noise": cfg["noise"]["seed"]},
        "versions": {
            "boundary_rds": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": wall,
        "outputs": {p.name: _sha256(p) for p in sorted(ctx.files)},
    }
    write_json(out / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# CLI


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boundary-rds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config (defaults to the packaged default)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--seed", type=int, help="overrides noise.seed")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            try:
                config = json.loads(args.config.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}")
        else:
            config = default_config()
        config = apply_overrides(config, args.overrides)
        if args.seed is not None:
            config.setdefault("noise", {})["seed"] = args.seed
        manifest = run_experiment(config, args.out, args.command)
    except ConfigError as exc:
        json.dump({"error": "config", "message": str(exc), "problems": exc.problems}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_SCHEMA
    except NumericalRefusal as exc:
        json.dump(_jsonable(exc.as_dict()), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return EXIT_REFUSAL
    except OSError as exc:
        json.dump({"error": "io", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_IO
    except ValueError as exc:
        json.dump({"error": "config", "message": str(exc), "problems": []}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_SCHEMA
    print(json.dumps({"experiment": manifest["experiment"], "outputs": sorted(manifest["outputs"])}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
