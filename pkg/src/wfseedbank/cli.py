"""Command-line front end.

Every run resolves its flags (and an optional TOML parameter file, which the
flags override) into an ``ExperimentSpec``; the spec is written next to the
outputs as ``spec.json`` and embedded in each output file, and
``wfseedbank replay DIR/spec.json --out DIR2`` reproduces the files byte for
byte.  Failures exit with status 2 and one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .boundary import EmpiricalConfig, classification_report, classify_boundaries
from .dual import simulate_dual, transient_dual_expectations
from .io import svg_lines, write_atomic, write_json
from .model import ModelParams, load_params, params_from_mapping, params_to_mapping
from .moments import (boundary_atom_estimate, finite_time_moments, reversibility_defect,
                      stationarity_residual, stationary_moments, stationary_moments_oracle)
from .sde import BOUNDARIES, estimate_moments, hitting_sequence, simulate_path, simulate_path_k
from .sdde import deviation_report, simulate_sdde_lift, simulate_sdde_quadrature
from .streams import Stream

__all__ = ["ExperimentSpec", "CliError", "build_parser", "resolve_spec", "run", "main"]

COMMANDS = ("simulate", "simulate-sdde", "dual", "moments", "finite-moments", "duality-check",
            "boundary", "classify", "reversibility", "atoms")

# command -> control defaults; only these controls are recorded for the command
_DEFAULTS = {
    "simulate": {"t_max": 1.0, "dt": 1e-4, "index": 0, "svg": False},
    "simulate-sdde": {"t_max": 1.0, "dt": 1e-3, "index": 0, "integrator": "both", "svg": False},
    "dual": {"n": 2, "m": 1, "t_max": 1.0, "index": 0},
    "moments": {"level": 4},
    "finite-moments": {"t": 1.0, "level": 3},
    "duality-check": {"times": [0.25, 1.0], "level": 2, "dt": 1e-3, "n_paths": 10_000},
    "boundary": {"boundary": "X0", "t_max": 2.0, "dt_sequence": [1e-3, 1e-4], "n_paths": 10_000},
    "classify": {"empirical": False, "t_max": 2.0, "dt_sequence": [1e-3, 1e-4], "n_paths": 10_000,
                 "offset": 0.01},
    "reversibility": {},
    "atoms": {"t": None, "dt": 1e-3, "n_paths": 100_000, "epsilon": [1e-1, 1e-2, 1e-3]},
}
_USES_INIT = {"simulate", "simulate-sdde", "finite-moments", "duality-check", "boundary", "atoms"}
_POSITIVE = ("t_max", "dt", "n_paths", "t", "offset")


class CliError(ValueError):
    """Invalid command line or specification."""


@dataclass
class ExperimentSpec:
    command: str
    params: ModelParams
    seed: int
    init: tuple | None = None
    controls: dict = field(default_factory=dict)
    out: Path | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise CliError(f"unknown command {self.command!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise CliError("seed must be a nonnegative integer")
        for key in _POSITIVE:
            v = self.controls.get(key)
            if v is not None and not v > 0:
                raise CliError(f"{key} must be positive, got {v}")
        for key in ("times", "dt_sequence", "epsilon"):
            vals = self.controls.get(key)
            if vals is not None and (not vals or any(not v > 0 for v in vals)):
                raise CliError(f"{key} must be a nonempty list of positive numbers")
        if self.controls.get("level") is not None and self.controls["level"] < 1:
            raise CliError("level must be at least 1")

    def record(self) -> dict:
        """The resolved spec as embedded in outputs (no output directory, no worker count)."""
        return {"command": self.command, "params": params_to_mapping(self.params),
                "seed": self.seed, "init": list(self.init) if self.init is not None else None,
                "controls": dict(self.controls)}

    @classmethod
    def from_record(cls, rec: dict, out=None) -> "ExperimentSpec":
        unknown = set(rec) - {"command", "params", "seed", "init", "controls"}
        if unknown:
            raise CliError(f"unknown spec keys {sorted(unknown)}")
        init = tuple(rec["init"]) if rec.get("init") is not None else None
        return cls(rec["command"], params_from_mapping(rec["params"]), rec["seed"], init,
                   dict(rec.get("controls", {})), Path(out) if out else None)


def _header(spec: ExperimentSpec) -> list[str]:
    return ["spec " + json.dumps(spec.record(), sort_keys=True, separators=(",", ":"))]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _add_common(p: argparse.ArgumentParser, command: str):
    g = p.add_argument_group("model")
    g.add_argument("--config", type=Path, help="TOML parameter file; flags override it")
    for key in ("u1", "u2", "u1p", "u2p", "c", "cp", "alpha", "alphap"):
        g.add_argument(f"--{key}", type=float)
    g.add_argument("--K", type=float, help="seed bank size; sets cp = c K")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo work")
    if command in _USES_INIT:
        p.add_argument("--x", type=float, default=0.5)
        p.add_argument("--y", type=float, nargs="+", default=None,
                       help="initial Y (one value per seed bank in the k-bank model)")
    d = _DEFAULTS[command]
    for key in ("t", "t_max", "dt", "n_paths", "level", "index", "n", "m", "offset"):
        if key in d:
            kind = int if key in ("n_paths", "level", "index", "n", "m") else float
            p.add_argument("--" + key.replace("_", "-"), type=kind, default=d[key])
    for key in ("times", "dt_sequence", "epsilon"):
        if key in d:
            p.add_argument("--" + key.replace("_", "-"), type=float, nargs="+", default=d[key])
    if "boundary" in d:
        p.add_argument("--boundary", choices=BOUNDARIES, default=d["boundary"])
    if "integrator" in d:
        p.add_argument("--integrator", choices=("lift", "quadrature", "both"), default=d["integrator"])
    if "svg" in d:
        p.add_argument("--svg", action="store_true", help="also write a quick-look SVG plot")
    if "empirical" in d:
        p.add_argument("--empirical", action="store_true", help="add Monte Carlo hit frequencies")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wfseedbank", description="Seed bank / two-island Wright-Fisher diffusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        _add_common(sub.add_parser(name), name)
    rp = sub.add_parser("replay", help="re-run a spec.json sidecar")
    rp.add_argument("spec", type=Path)
    rp.add_argument("--out", type=Path, required=True)
    rp.add_argument("--workers", type=int, default=1)
    return parser


def _resolve_params(ns) -> ModelParams:
    raw = params_to_mapping(load_params(ns.config)) if ns.config else params_to_mapping(ModelParams())
    for key in ("u1", "u2", "u1p", "u2p", "c", "cp", "alpha", "alphap"):
        v = getattr(ns, key)
        if v is not None:
            raw[key] = v
    if ns.K is not None:
        if ns.cp is not None:
            raise CliError("give either --cp or --K, not both")
        raw["cp"] = raw["c"] * ns.K
    return params_from_mapping(raw)


def resolve_spec(ns) -> ExperimentSpec:
    params = _resolve_params(ns)
    controls = {}
    for key in _DEFAULTS[ns.command]:
        controls[key] = getattr(ns, key)
    init = None
    if ns.command in _USES_INIT:
        ys = ns.y if ns.y is not None else [0.5] * max(1, params.k)
        init = (ns.x, *ys)
    return ExperimentSpec(ns.command, params, ns.seed, init, controls, ns.out)


# --- command bodies: each returns {file name: writer or JSON object}


def _csv(obj, spec):
    return lambda fh: obj.to_csv(fh, header_comments=_header(spec))


def _cmd_simulate(spec, workers):
    c = spec.controls
    stream = Stream(spec.seed, c["index"])
    sim = simulate_path_k if spec.params.seedbanks else simulate_path
    path = sim(spec.params, spec.init, c["t_max"], c["dt"], stream)
    out = {"path.csv": _csv(path, spec)}
    if c["svg"]:
        series = {"x": path.x} | {f"y{i + 1}": path.states[:, i + 1] for i in range(path.states.shape[1] - 1)}
        out["path.svg"] = svg_lines(path.times, series)
    return out


def _cmd_simulate_sdde(spec, workers):
    c = spec.controls
    stream = Stream(spec.seed, c["index"])
    sde = simulate_path_k(spec.params, spec.init, c["t_max"], c["dt"], stream)
    out, report = {}, {"spec": spec.record(), "deviations": []}
    paths = {}
    if c["integrator"] in ("lift", "both"):
        paths["lift"] = simulate_sdde_lift(spec.params, spec.init, c["t_max"], c["dt"], stream)
    if c["integrator"] in ("quadrature", "both"):
        paths["quadrature"] = simulate_sdde_quadrature(spec.params, spec.init, c["t_max"], c["dt"], stream)
    for name, path in paths.items():
        out[f"sdde_{name}.csv"] = _csv(path, spec)
        report["deviations"].append(deviation_report(sde, path, ("sde", name)))
    if len(paths) == 2:
        report["deviations"].append(deviation_report(paths["lift"], paths["quadrature"], ("lift", "quadrature")))
    out["deviation.json"] = report
    if c["svg"]:
        series = {"x (sde)": sde.x} | {f"x ({k})": v.x for k, v in paths.items()}
        out["sdde.svg"] = svg_lines(sde.times, series)
    return out


def _cmd_dual(spec, workers):
    c = spec.controls
    traj = simulate_dual(spec.params, (c["n"], c["m"]), c["t_max"], Stream(spec.seed, c["index"]))
    return {"trajectory.csv": _csv(traj, spec)}


def _cmd_moments(spec, workers):
    N = spec.controls["level"]
    table = stationary_moments(spec.params, N)
    oracle = stationary_moments_oracle(spec.params, N)
    check = {"spec": spec.record(), "oracle_sup_distance": table.sup_distance(oracle),
             "violations": table.violations()}
    return {"stationary_moments.csv": _csv(table, spec), "moments_check.json": check}


def _cmd_finite_moments(spec, workers):
    c = spec.controls
    x, y = spec.init[:2]
    table = finite_time_moments(spec.params, x, y, c["level"], c["t"])
    return {"finite_moments.csv": _csv(table, spec)}


def _cmd_duality_check(spec, workers):
    c = spec.controls
    x, y = spec.init[:2]
    N = c["level"]
    exps = [(n, lvl - n) for lvl in range(N + 1) for n in range(lvl, -1, -1)]
    est = estimate_moments(spec.params, (x, y), exps, c["times"], c["dt"], c["n_paths"], spec.seed, workers)

    def write(fh):
        for line in _header(spec):
            fh.write(f"# {line}\n")
        fh.write("n,m,t,forward,std_error,dual,z\n")
        for t in c["times"]:
            dual = transient_dual_expectations(spec.params, N, x, y, t)
            for n, m in exps:
                e = est[(n, m, t)]
                d = dual[(n, m)]
                z = (e.value - d) / e.std_error if e.std_error > 0 else 0.0
                fh.write(f"{n},{m},{t!r},{e.value!r},{e.std_error!r},{float(d)!r},{z!r}\n")

    return {"duality.csv": write}


def _cmd_boundary(spec, workers):
    c = spec.controls
    key = c["boundary"]
    hits = hitting_sequence(spec.params, spec.init, key, c["t_max"], c["dt_sequence"],
                            c["n_paths"], spec.seed, workers)
    verdict = next(v for v in classify_boundaries(spec.params) if v.boundary == key)
    return {"hitting.json": {"spec": spec.record(), "verdict": verdict.as_dict(),
                             "hits": [h.as_dict() for h in hits]}}


def _cmd_classify(spec, workers):
    c = spec.controls
    cfg = None
    if c["empirical"]:
        cfg = EmpiricalConfig(dt_sequence=tuple(c["dt_sequence"]), t_max=c["t_max"], n_paths=c["n_paths"],
                              seed=spec.seed, offset=c["offset"], n_workers=workers)
    report = classification_report(spec.params, cfg)
    report["spec"] = spec.record()
    return {"classification.json": report}


def _cmd_reversibility(spec, workers):
    res = stationarity_residual(spec.params)
    res["defect"] = reversibility_defect(spec.params)
    res["spec"] = spec.record()
    return {"reversibility.json": res}


def _cmd_atoms(spec, workers):
    c = spec.controls
    res = boundary_atom_estimate(spec.params, c["t"], c["dt"], c["n_paths"], c["epsilon"],
                                 spec.seed, spec.init[:2], workers)
    res["spec"] = spec.record()
    return {"atoms.json": res}


_DISPATCH = {
    "simulate": _cmd_simulate, "simulate-sdde": _cmd_simulate_sdde, "dual": _cmd_dual,
    "moments": _cmd_moments, "finite-moments": _cmd_finite_moments,
    "duality-check": _cmd_duality_check, "boundary": _cmd_boundary, "classify": _cmd_classify,
    "reversibility": _cmd_reversibility, "atoms": _cmd_atoms,
}


def run(spec: ExperimentSpec, workers: int = 1) -> list[Path]:
    """Execute ``spec`` and write its files (plus ``spec.json``) into ``spec.out``."""
    if spec.out is None:
        raise CliError("no output directory")
    if workers < 1:
        raise CliError("workers must be at least 1")
    products = _DISPATCH[spec.command](spec, workers)
    written = []
    for name, item in products.items():
        target = spec.out / name
        if callable(item):
            written.append(write_atomic(target, item))
        elif isinstance(item, str):
            written.append(write_atomic(target, lambda fh, s=item: fh.write(s)))
        else:
            written.append(write_json(target, item))
    written.append(write_json(spec.out / "spec.json", spec.record()))
    return written


def _fail(exc: BaseException) -> int:
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True)
    print(line.replace("\n", " "), file=sys.stderr)
    return 2


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "replay":
            with open(ns.spec, encoding="utf-8") as fh:
                spec = ExperimentSpec.from_record(json.load(fh), ns.out)
        else:
            spec = resolve_spec(ns)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            files = run(spec, ns.workers)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        return _fail(exc)
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
