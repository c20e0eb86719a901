"""Batch driver: ``wentzell run <config.toml>`` and ``wentzell verify <suite>``.

Exit codes: 0 success, 1 verification or run failure, 2 usage or config
error. Failures print one JSON line ``{"error": <category>, "message": ...}``
to stderr. ``WENTZELL_THREADS`` caps the BLAS/OpenMP thread count.
"""

from __future__ import annotations

import os

_threads = os.environ.get("WENTZELL_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import platform  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import scipy  # noqa: E402

try:  # Python >= 3.11
    import tomllib  # noqa: E402
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib  # noqa: E402

from . import __version__  # noqa: E402
from .carleman import build_eta0, carleman_ratio, weights, write_sweep_csv  # noqa: E402
from .checks import SUITES, run_suite  # noqa: E402
from .control import penalized_hum, weighted_minimal_control  # noqa: E402
from .errors import ConfigError, InvalidArgument, WentzellError  # noqa: E402
from .evolution import (  # noqa: E402
    EvolutionConfig,
    Propagator,
    SourceData,
    mass_functional,
    residual_distributional,
    solve_backward,
    solve_forward,
)
from .fields import L2Pair  # noqa: E402
from .geometry import build_mesh, control_mask, full_observation, shrink  # noqa: E402
from .observability import estimate_backward_observability  # noqa: E402
from .operators import PotentialPair, assemble  # noqa: E402
from .semilinear import Nonlinearity, picard_control, rational_saturation  # noqa: E402

MODES = ("simulate", "hum", "weighted", "semilinear", "observability", "carleman-sweep")
NONLINEARITIES = {"zero": Nonlinearity, "saturation": rational_saturation}
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


# config ----------------------------------------------------------------------

def _block(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"missing [{name}] block")
    if not isinstance(cfg[name], dict):
        raise ConfigError(f"[{name}] must be a table")
    return cfg[name]


def _num(block: dict, key: str, where: str, default=None, *, kind=float):
    if key not in block:
        if default is None:
            raise ConfigError(f"missing field {where}.{key}")
        return default
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"field {where}.{key} must be a number, got {val!r}")
    return kind(val)


def _potential(spec, name: str, n_nodes: int):
    """``zero | constant | table`` specifier to a potential entry."""
    if spec is None:
        return None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"field physics.{name} needs a 'kind' (zero, constant, table)")
    kind = spec["kind"]
    if kind == "zero":
        return None
    if kind == "constant":
        return _num(spec, "value", f"physics.{name}")
    if kind == "table":
        times = np.asarray(spec.get("times", []), float)
        values = spec.get("values", [])
        if times.ndim != 1 or times.size == 0 or len(values) != times.size or np.any(np.diff(times) <= 0):
            raise ConfigError(f"field physics.{name}: table needs increasing 'times' and one 'values' row per time")
        rows = [np.broadcast_to(np.asarray(v, float), (n_nodes,)).copy() for v in values]

        def table(t, times=times, rows=rows):
            k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(rows) - 1))
            return rows[k]

        return table
    raise ConfigError(f"field physics.{name}.kind must be zero, constant or table, got {kind!r}")


def _region(mesh, spec):
    if spec == "full":
        return full_observation(mesh)
    if not isinstance(spec, dict):
        raise ConfigError("field control.region must be a table or \"full\"")
    desc = {k: tuple(v) if isinstance(v, list) else v for k, v in spec.items()}
    return control_mask(mesh, desc)


class Experiment:
    """Everything a mode needs, built from a parsed TOML document."""

    def __init__(self, cfg: dict, seed: int | None = None):
        self.raw = cfg
        self.seed = int(cfg.get("seed", 0) if seed is None else seed)
        geo = _block(cfg, "geometry")
        kind = geo.get("kind", "disk")
        if kind == "disk":
            self.mesh = build_mesh("disk", n_r=_num(geo, "n_r", "geometry", 16, kind=int),
                                   n_theta=_num(geo, "n_theta", "geometry", 64, kind=int),
                                   radius=_num(geo, "radius", "geometry", 1.0))
        elif kind == "interval":
            self.mesh = build_mesh("interval", n=_num(geo, "n", "geometry", 200, kind=int),
                                   length=_num(geo, "length", "geometry", 1.0))
        else:
            raise ConfigError(f"field geometry.kind must be disk or interval, got {kind!r}")
        phys = _block(cfg, "physics")
        self.op = assemble(self.mesh, _num(phys, "d", "physics", 1.0), _num(phys, "delta", "physics", 1.0))
        self.pot = PotentialPair(_potential(phys.get("a"), "a", self.mesh.n_bulk),
                                 _potential(phys.get("b"), "b", self.mesh.n_boundary))
        tb = _block(cfg, "time")
        self.cfg = EvolutionConfig(_num(tb, "T", "time"), _num(tb, "M", "time", kind=int),
                                   _num(tb, "theta", "time", 0.5))
        ctl = cfg.get("control", {})
        self.mode = ctl.get("mode", "simulate")
        if self.mode not in MODES:
            raise ConfigError(f"field control.mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.mode != "simulate":
            ctl = _block(cfg, "control")
            if "region" not in ctl:
                raise ConfigError("missing field control.region")
            self.region = _region(self.mesh, ctl["region"])
        self.control = ctl
        self.weights = cfg.get("weights", {})
        self.y0 = self._initial(cfg.get("initial", {}))

    def _initial(self, block: dict) -> L2Pair:
        kind = block.get("kind", "constant")
        if kind == "constant":
            b = _num(block, "bulk", "initial", 1.0)
            return L2Pair.constant(self.mesh, b, _num(block, "surface", "initial", b))
        if kind == "random_smooth":
            return L2Pair.random_smooth(self.mesh, np.random.default_rng(self.seed),
                                        _num(block, "degree", "initial", 3, kind=int))
        raise ConfigError(f"field initial.kind must be constant or random_smooth, got {kind!r}")

    def carleman_weights(self, **over):
        w = _block(self.raw, "weights")
        eta0 = build_eta0(self.mesh, shrink(self.mesh, self.region))
        return weights(eta0, s=over.get("s", _num(w, "s", "weights", 2.0)),
                       lam=over.get("lam", _num(w, "lam", "weights", 2.0)),
                       m=_num(w, "m", "weights", 2.0), T=self.cfg.T)


# artifacts -------------------------------------------------------------------

def _write_control_csv(path: Path, times, v: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node_id", "value"])
        nodes = np.flatnonzero(np.any(v != 0, axis=0))
        for n, t in enumerate(times):
            ts = repr(float(t))
            for i in nodes:
                w.writerow([ts, int(i), repr(float(v[n, i]))])


def _write_series_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _scalar(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, dict):
        return {k: _scalar(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_scalar(v) for v in x]
    return x


def _mode_simulate(ex: Experiment, out: Path) -> dict:
    tr = solve_forward(ex.op, ex.pot, SourceData(ex.y0), ex.cfg)
    tr.to_csv(out / "trajectory.csv", ex.mesh)
    mass = mass_functional(tr, ex.mesh)
    norms = tr.node_norms(ex.mesh)
    _write_series_csv(out / "mass.csv", ["t", "mass", "norm"], zip(tr.times, mass, norms))
    return {
        "mass_drift": float(np.abs(mass - mass[0]).max() / max(abs(mass[0]), np.finfo(float).tiny)),
        "final_norm": float(norms[-1]),
        "distributional_residual": residual_distributional(tr, ex.op, ex.pot, SourceData(ex.y0), ex.cfg),
    }


def _control_artifacts(res, ex: Experiment, out: Path) -> None:
    res.y.to_csv(out / "state.csv", ex.mesh)
    _write_control_csv(out / "control.csv", ex.cfg.times, res.v)
    res.to_json(out / "result.json")


def _mode_hum(ex: Experiment, out: Path) -> dict:
    c = ex.control
    res = penalized_hum(ex.op, ex.pot, None, None, ex.y0, ex.region, ex.cfg,
                        _num(c, "epsilon", "control", 1e-3), _num(c, "cg_tol", "control", 1e-8),
                        maxiter=_num(c, "maxiter", "control", 500, kind=int))
    _control_artifacts(res, ex, out)
    d = res.diagnostics
    return {"terminal_norm": res.terminal_norm, "identity_residual": d["identity_residual"],
            "phi_norm": d["phi_norm"], "control_energy": res.control_energy, "cg_iterations": d["cg_iterations"]}


def _mode_weighted(ex: Experiment, out: Path) -> dict:
    c, w = ex.control, _block(ex.raw, "weights")
    res = weighted_minimal_control(ex.op, ex.pot, None, None, ex.y0, ex.region, ex.carleman_weights(), ex.cfg,
                                   _num(w, "epsilon_rho", "weights", 1.0), _num(w, "mu", "weights", 1e-6),
                                   _num(c, "cg_tol", "control", 1e-8),
                                   maxiter=_num(c, "maxiter", "control", 500, kind=int))
    _control_artifacts(res, ex, out)
    return {"terminal_norm": res.terminal_norm, "cost": res.cost, "control_energy": res.control_energy,
            "weighted_state_energy": res.weighted_state_energy, "cg_iterations": res.diagnostics["cg_iterations"]}


def _mode_semilinear(ex: Experiment, out: Path) -> dict:
    c = ex.control
    name = c.get("nonlinearity", "saturation")
    if name not in NONLINEARITIES:
        raise ConfigError(f"field control.nonlinearity must be one of {', '.join(NONLINEARITIES)}")
    solver = c.get("solver", "weighted")
    if solver == "weighted":
        w = _block(ex.raw, "weights")
        params = {"epsilon_rho": _num(w, "epsilon_rho", "weights", 1.0), "mu": _num(w, "mu", "weights", 1e-6),
                  "cg_tol": _num(c, "cg_tol", "control", 1e-8)}
        cw = ex.carleman_weights()
    else:
        params = {"epsilon": _num(c, "epsilon", "control", 1e-3), "cg_tol": _num(c, "cg_tol", "control", 1e-8)}
        cw = None
    res = picard_control(ex.op, NONLINEARITIES[name](), None, None, ex.y0, ex.region, ex.cfg, solver=solver, cw=cw,
                         control_params=params, max_iter=_num(c, "max_iter", "control", 50, kind=int),
                         fp_tol=_num(c, "fp_tol", "control", 1e-6), damping=_num(c, "damping", "control", 1.0))
    res.write_history(out / "history.csv")
    _control_artifacts(res.control, ex, out)
    return {"iterations": res.iterations, "terminal_norm": res.control.terminal_norm,
            "linear_terminal_norm": res.linear.terminal_norm, "relinearization_change": res.relinearization_change,
            "nonlinear_residual": res.nonlinear_residual}


def _mode_observability(ex: Experiment, out: Path) -> dict:
    c = ex.control
    rep = estimate_backward_observability(ex.op, ex.pot, ex.region, ex.cfg, _num(c, "tol", "control", 1e-4),
                                          max_iter=_num(c, "max_iter", "control", 100, kind=int), seed=ex.seed)
    rep.to_json(out / "observability.json")
    _write_series_csv(out / "quotient_history.csv", ["iteration", "quotient", "inner_iterations"],
                      zip(range(1, rep.iterations + 1), rep.quotient_history, rep.inner_iterations))
    m = rep.maximizer
    _write_series_csv(out / "maximizer.csv", ["node_id", "component", "value"],
                      [(i, "bulk", float(x)) for i, x in enumerate(m.bulk)]
                      + [(ex.mesh.n_bulk + i, "surface", float(x)) for i, x in enumerate(m.surface)])
    return {"constant": rep.constant, "iterations": rep.iterations, "residual": rep.residual,
            "increment": rep.increment, "shift": rep.shift}


def _mode_carleman_sweep(ex: Experiment, out: Path) -> dict:
    c = ex.control
    s_values = [float(s) for s in c.get("s_values", [2.0, 4.0, 8.0])]
    lam = _num(_block(ex.raw, "weights"), "lam", "weights", 2.0)
    samples = _num(c, "samples", "control", 10, kind=int)
    rng = np.random.default_rng(ex.seed)
    prop = Propagator(ex.op, ex.pot, ex.cfg)
    rows, ratios = [], []
    for _ in range(samples):
        tr = solve_backward(ex.op, ex.pot, None, None, L2Pair.random_smooth(ex.mesh, rng), ex.cfg, prop=prop)
        for s in s_values:
            rep = carleman_ratio(tr, ex.op, ex.pot, ex.carleman_weights(s=s, lam=lam), ex.cfg, ex.region)
            rows.append((s, lam, rep))
            ratios.append(rep.ratio)
    write_sweep_csv(out / "sweep.csv", rows)
    return {"max_ratio": float(max(ratios)), "min_ratio": float(min(ratios)), "samples": samples}


MODE_RUNNERS = {
    "simulate": _mode_simulate,
    "hum": _mode_hum,
    "weighted": _mode_weighted,
    "semilinear": _mode_semilinear,
    "observability": _mode_observability,
    "carleman-sweep": _mode_carleman_sweep,
}


def run(config_path, output_dir=None, seed: int | None = None) -> dict:
    """Execute one experiment and write its artifacts; returns the manifest."""
    path = Path(config_path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    try:
        ex = Experiment(raw, seed)
    except InvalidArgument as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    out = Path(output_dir or raw.get("output", {}).get("directory", "results"))
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    headline = MODE_RUNNERS[ex.mode](ex, out)
    manifest = {
        "mode": ex.mode,
        "seed": ex.seed,
        "config": raw,
        "versions": {"wentzell": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": time.perf_counter() - t0,
        "headline": _scalar(headline),
        "artifacts": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    return manifest


def verify(suite: str, seed: int = 0, output_dir=None) -> bool:
    checks = run_suite(suite, seed)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    if output_dir:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"verify_{suite}.json").write_text(json.dumps([c.to_dict() for c in checks], indent=2))
    print(f"{suite}: {'PASS' if ok else 'FAIL'} ({sum(c.passed for c in checks)}/{len(checks)})")
    return ok


def _error(exc: Exception) -> None:
    cat = getattr(exc, "category", "error")
    print(json.dumps({"error": cat, "message": str(exc)}), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wentzell", description=__doc__.splitlines()[0])
    p.add_argument("--output-dir", help="directory for results (overrides [output].directory)")
    p.add_argument("--seed", type=int, help="seed for randomized probes (overrides the config)")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a TOML config")
    r.add_argument("config")
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help=f"one of: {', '.join(SUITES)}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "run":
            manifest = run(args.config, args.output_dir, args.seed)
            print(json.dumps(manifest["headline"]))
            return EXIT_OK
        if args.suite not in SUITES:
            raise ConfigError(f"unknown suite {args.suite!r}; valid suites: {', '.join(SUITES)}")
        return EXIT_OK if verify(args.suite, args.seed or 0, args.output_dir) else EXIT_FAIL
    except ConfigError as exc:
        _error(exc)
        return EXIT_USAGE
    except WentzellError as exc:
        _error(exc)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
