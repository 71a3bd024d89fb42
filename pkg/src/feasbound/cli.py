"""Command-line front end: ``feasbound {point,trace,sweep,scan,compare}``.

Every run writes into ``--out``: CSV is the canonical output, JSON sidecars
echo the effective configuration, and an SVG overlays the curves.  Outputs
depend only on the case bytes, the configuration and ``--seed``.

Exit codes: 0 success, 1 other solver error, 2 bad input (missing or
malformed case, bad arguments), 3 no boundary point found.  On failure a
one-line JSON error object is printed on stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import export
from .boundary import BranchSwitcher, NewtonSettings, find_seeds, plane_system
from .errors import EmptySeedSet, FeasboundError, ParseError, UnsupportedFeature, ValidationError
from .netcase import CaseFormat, builtin_case, load_case
from .oracle import BoundaryKind, ScanGrid, classify_grid, densify, directed_distances, extract_boundary
from .pfsystem import Binding
from .tracer import RadiusPolicy, Termination, TraceSettings, sweep_contours, trace_seeds

log = logging.getLogger("feasbound")

MODES = ("point", "trace", "sweep", "scan", "compare")


@dataclass
class RunConfig:
    """Effective settings of one run (defaults < config file < flags)."""

    mode: str = "trace"
    case: str = ""
    format: str | None = None
    plane: str = "2:P,3:P"
    fix: list[str] = field(default_factory=list)
    start: str | None = None
    box: str | None = None
    radius_max: float = 0.2
    radius_min: float = 1e-4
    eps: float = 1e-8
    max_steps: int = 10000
    restarts: int = 32
    jobs: int = 1
    seed: int = 0
    out: str = "feasbound-out"
    vlimits: str | None = None
    neutralize_transformers: bool = False
    no_limits: bool = False
    follow_boundary: bool = False
    sweep_param: str | None = None
    values: str | None = None
    step: float = 0.01

    # -- parsed views -----------------------------------------------------
    def plane_bindings(self) -> list[Binding]:
        parts = [p for p in self.plane.split(",") if p.strip()]
        if len(parts) != 2:
            raise ValueError(f"--plane needs two bindings like 2:P,3:P, got {self.plane!r}")
        return [Binding.parse(p) for p in parts]

    def fixed(self) -> dict[Binding, float]:
        out = {}
        for item in self.fix:
            name, sep, val = item.partition("=")
            if not sep:
                raise ValueError(f"--fix needs BUS:Q=value, got {item!r}")
            out[Binding.parse(name)] = float(val)
        return out

    def box_ranges(self):
        if self.box is None:
            return None
        v = _floats(self.box, "--box")
        if len(v) != 4 or not (v[0] < v[1] and v[2] < v[3]):
            raise ValueError("--box needs lo1,hi1,lo2,hi2 with lo < hi")
        return ((v[0], v[1]), (v[2], v[3]))

    def sweep_values(self) -> list[float]:
        if self.values is None:
            raise ValueError("sweep needs --values")
        return _floats(self.values, "--values") if self.values.strip() else []


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValueError(f"{what}: expected comma-separated numbers, got {text!r}") from None


# -- argument handling ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("case and plane")
    g.add_argument("--config", help="JSON file with option values (flags take precedence)")
    g.add_argument("--case", help="case file (.json or MATPOWER .m) or builtin:NAME")
    g.add_argument("--format", choices=[f.value for f in CaseFormat])
    g.add_argument("--vlimits", help="override PQ voltage limits, e.g. 0.9,1.1")
    g.add_argument("--neutralize-transformers", action="store_true", default=None,
                   help="set MATPOWER tap ratios to 1 and shifts to 0 instead of rejecting them")
    g.add_argument("--plane", help="two bindings BUS:P|Q, e.g. 2:P,3:P")
    g.add_argument("--fix", action="append", help="fixed parameter BUS:P|Q=value (repeatable)")
    g.add_argument("--start", help="seeding start values of the plane parameters (default: base case)")
    g.add_argument("--box", help="parameter box lo1,hi1,lo2,hi2")
    g.add_argument("--no-limits", action="store_true", default=None,
                   help="drop voltage-limit rows (solvability boundary)")
    s = common.add_argument_group("solver")
    s.add_argument("--radius-max", type=float, help="asymptotic sphere radius A (default 0.2)")
    s.add_argument("--radius-min", type=float, help="smallest sphere radius (default 1e-4)")
    s.add_argument("--eps", type=float, help="corrector tolerance (default 1e-8)")
    s.add_argument("--max-steps", type=int)
    s.add_argument("--restarts", type=int, help="TENR starts incl. the flat one (default 32)")
    s.add_argument("--follow-boundary", action="store_true", default=None,
                   help="switch branches where limits or the fold are crossed")
    s.add_argument("--jobs", type=int, help="worker threads for sweeps")
    s.add_argument("--seed", type=int, help="RNG seed (default 0)")
    s.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="feasbound", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="mode", required=True)
    sub.add_parser("point", parents=[common], help="boundary points by TENR")
    sub.add_parser("trace", parents=[common], help="trace boundary curves in a plane")
    sw = sub.add_parser("sweep", parents=[common], help="contour family over a third parameter")
    sw.add_argument("--sweep-param", help="binding swept, e.g. 3:Q")
    sw.add_argument("--values", help="comma-separated values of the swept parameter")
    for name in ("scan", "compare"):
        sp_ = sub.add_parser(name, parents=[common],
                             help="brute-force grid classification" if name == "scan"
                             else "trace plus scan, with distances")
        sp_.add_argument("--step", type=float, help="grid step (default 0.01)")
    return p


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    cfg = asdict(RunConfig())
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text())
        except OSError as exc:
            raise ParseError(str(exc.strerror or exc), ns.config) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"{ns.config}:{exc.lineno}") from None
        unknown = set(data) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for k, v in vars(ns).items():
        if k in cfg and v is not None:
            cfg[k] = v
    cfg["mode"] = ns.mode
    if not cfg["case"]:
        raise ValueError("--case is required")
    return RunConfig(**cfg)


# -- shared pieces -------------------------------------------------------------

def open_case(cfg: RunConfig):
    vl = _floats(cfg.vlimits, "--vlimits") if cfg.vlimits else None
    if vl is not None and len(vl) != 2:
        raise ValueError("--vlimits needs vmin,vmax")
    kw = {"vlimits": tuple(vl) if vl else None, "neutralize_transformers": cfg.neutralize_transformers}
    if cfg.case.startswith("builtin:"):
        return builtin_case(cfg.case.split(":", 1)[1], **kw)
    return load_case(cfg.case, cfg.format, **kw)


def _start(cfg: RunConfig, case, plane):
    if cfg.start is not None:
        v = _floats(cfg.start, "--start")
        if len(v) != 2:
            raise ValueError("--start needs two values")
        return tuple(v)
    return tuple(case.bus(b.bus).p_inj if b.quantity == "P" else case.bus(b.bus).q_inj for b in plane)


def systems(cfg: RunConfig, case, fixed=None):
    plane = cfg.plane_bindings()
    fixed = cfg.fixed() if fixed is None else fixed
    s1 = plane_system(case, plane, fixed, _start(cfg, case, plane), limits=not cfg.no_limits)
    return s1, s1.with_free((0, 1))


def settings(cfg: RunConfig):
    policy = RadiusPolicy(a_max=cfg.radius_max, r_min=cfg.radius_min, r_max=cfg.radius_max)
    box = cfg.box_ranges()
    ts = TraceSettings(eps=cfg.eps, max_steps=cfg.max_steps,
                       box=None if box is None else (tuple(box[0]), tuple(box[1])))
    return policy, ts


def switcher_factory(cfg: RunConfig):
    if not cfg.follow_boundary or cfg.no_limits:
        return None
    return BranchSwitcher


def _echo(cfg: RunConfig) -> dict:
    return asdict(cfg)


def _write_curves(out: Path, stem: str, sys2, curves, cfg, index: list):
    for k, c in enumerate(curves):
        name = f"{stem}_{k:02d}.csv"
        (out / name).write_text(export.curve_csv(sys2, c))
        export.write_json(out / f"{stem}_{k:02d}.json", export.curve_sidecar(c, _echo(cfg), name))
        index.append({"csv": name, "termination": c.termination.value, "steps": len(c), "label": c.label})


def _lam_polyline(sys2, curve):
    P = np.array([sys2.full_params(z)[:2] for z in curve.points])
    if curve.termination == Termination.CLOSED_LOOP:
        P = np.vstack([P, P[:1]])
    return P


# -- commands ------------------------------------------------------------------

def cmd_point(cfg: RunConfig) -> dict:
    case = open_case(cfg)
    s1, _ = systems(cfg, case)
    seeds = find_seeds(s1, cfg.restarts, NewtonSettings(), seed=cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "schema_version": export.SCHEMA_VERSION,
        "seeds": [{
            "origin": s.origin,
            "restart": s.restart,
            "lambda": s1.full_params(s.z).tolist(),
            "sigma_min": s.sigma_min,
            "residual_norm": s.residual_norm,
            "iterations": s.iterations,
            "z": s.z.tolist(),
        } for s in seeds],
        "config": _echo(cfg),
    }
    export.write_json(out / "seeds.json", report)
    return {"seeds": len(seeds), "file": str(out / "seeds.json")}


def _trace_all(cfg, case):
    s1, s2 = systems(cfg, case)
    seeds = find_seeds(s1, cfg.restarts, NewtonSettings(), seed=cfg.seed)
    policy, ts = settings(cfg)
    lifted = [s2.lift(s.z, s1) for s in seeds]
    curves = trace_seeds(s2, lifted, policy, ts, [s.origin for s in seeds],
                         {}, switcher_factory(cfg))
    return s2, curves


def cmd_trace(cfg: RunConfig) -> dict:
    case = open_case(cfg)
    s2, curves = _trace_all(cfg, case)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    index: list = []
    _write_curves(out, "curve", s2, curves, cfg, index)
    names = [b.label() for b in s2.params.bindings[:2]]
    (out / "curves.svg").write_text(export.svg_overlay(
        [_lam_polyline(s2, c) for c in curves], [f"curve {k}" for k in range(len(curves))], names))
    export.write_json(out / "run.json", {"schema_version": export.SCHEMA_VERSION, "curves": index,
                                         "config": _echo(cfg)})
    return {"curves": index}


def cmd_sweep(cfg: RunConfig) -> dict:
    case = open_case(cfg)
    if not cfg.sweep_param:
        raise ValueError("sweep needs --sweep-param")
    swept = Binding.parse(cfg.sweep_param)
    values = cfg.sweep_values()
    fixed = {k: v for k, v in cfg.fixed().items() if k != swept}
    fixed = {swept: values[0] if values else 0.0, **fixed}
    _, s2 = systems(cfg, case, fixed)
    policy, ts = settings(cfg)
    res = sweep_contours(s2, 2, values, policy, ts, n_restarts=cfg.restarts, seed=cfg.seed,
                         switcher_factory=switcher_factory(cfg), jobs=cfg.jobs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    index: list = []
    for vi, v in enumerate(values):
        group = [c for c in res if c.label.get("value") == v]
        vals = s2.params.values.copy()
        vals[2] = v
        _write_curves(out, f"sweep_v{vi:03d}", s2.with_free((0, 1), vals), group, cfg, index)
    names = [b.label() for b in s2.params.bindings[:2]]
    lines = []
    for c in res:
        vals = s2.params.values.copy()
        vals[2] = c.label["value"]
        lines.append(_lam_polyline(s2.with_free((0, 1), vals), c))
    (out / "sweep.svg").write_text(export.svg_overlay(
        lines, [f"{c.label['param']}={c.label['value']:g}" for c in res], names))
    failures = {f"{k:.17g}": m for k, m in res.failures.items()}
    export.write_json(out / "run.json", {"schema_version": export.SCHEMA_VERSION, "curves": index,
                                         "failures": failures, "config": _echo(cfg)})
    return {"curves": index, "failures": failures}


def _grid(cfg: RunConfig) -> ScanGrid:
    box = cfg.box_ranges()
    if box is None:
        raise ValueError(f"{cfg.mode} needs --box")
    if not cfg.step > 0:
        raise ValueError("--step must be positive")
    return ScanGrid(tuple(cfg.plane_bindings()), box, cfg.step, cfg.fixed())


def _coarse_warning(cfg: RunConfig, grid: ScanGrid) -> str | None:
    (a, b), (c, d) = grid.ranges
    if cfg.step > min(b - a, d - c) / 4:
        msg = f"grid step {cfg.step:g} exceeds a quarter of the box; the oracle boundary is very coarse"
        log.warning(msg)
        return msg
    return None


def cmd_scan(cfg: RunConfig) -> dict:
    case = open_case(cfg)
    grid = _grid(cfg)
    warning = _coarse_warning(cfg, grid)
    res = classify_grid(case, grid, seed=cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scan.csv").write_text(res.to_csv())
    counts = {k.value: int(v) for k, v in res.counts().items()}
    export.write_json(out / "scan.json", {"schema_version": export.SCHEMA_VERSION, "counts": counts,
                                          "shape": list(grid.shape), "warning": warning,
                                          "config": _echo(cfg)})
    return {"counts": counts, "warning": warning}


def cmd_compare(cfg: RunConfig) -> dict:
    case = open_case(cfg)
    grid = _grid(cfg)
    warning = _coarse_warning(cfg, grid)
    s2, curves = _trace_all(cfg, case)
    res = classify_grid(case, grid, seed=cfg.seed)
    kind = BoundaryKind.SOLVABILITY if cfg.no_limits else BoundaryKind.FEASIBILITY
    oracle_pts = extract_boundary(res, kind)
    lines = [_lam_polyline(s2, c) for c in curves]
    spacing = min(grid.step) / 5
    traced = np.vstack([densify(p, spacing) for p in lines]) if lines else np.zeros((0, 2))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"schema_version": export.SCHEMA_VERSION, "warning": warning, "curves": len(curves),
              "oracle_points": int(len(oracle_pts)), "config": _echo(cfg)}
    if len(traced) and len(oracle_pts):
        d_to = directed_distances(traced, oracle_pts)      # traced -> oracle
        d_from = directed_distances(oracle_pts, traced)    # oracle -> traced
        report.update(hausdorff=float(max(d_to.max(), d_from.max())),
                      trace_to_oracle=float(d_to.max()), oracle_to_trace=float(d_from.max()),
                      mean_point_distance=float(np.mean(directed_distances(np.vstack(lines), oracle_pts))))
        rows = ["curve,step,lambda1,lambda2,nearest_cell_distance"]
        for k, p in enumerate(lines):
            d = directed_distances(p, oracle_pts)
            rows += [f"{k},{j},{export.fmt(a)},{export.fmt(b)},{export.fmt(e)}"
                     for j, ((a, b), e) in enumerate(zip(p, d))]
        (out / "compare_points.csv").write_text("\n".join(rows) + "\n")
    else:
        report.update(hausdorff=None, trace_to_oracle=None, oracle_to_trace=None, mean_point_distance=None)
    (out / "scan.csv").write_text(res.to_csv())
    (out / "compare.svg").write_text(export.svg_overlay(
        lines, [f"curve {k}" for k in range(len(lines))],
        [b.label() for b in s2.params.bindings[:2]], points=oracle_pts))
    export.write_json(out / "compare.json", report)
    return {k: report[k] for k in ("hausdorff", "trace_to_oracle", "oracle_to_trace", "curves", "warning")}


COMMANDS = {"point": cmd_point, "trace": cmd_trace, "sweep": cmd_sweep, "scan": cmd_scan,
            "compare": cmd_compare}


def _error(kind: str, exc: BaseException, code: int) -> int:
    payload = {"error": kind, "message": str(exc)}
    loc = getattr(exc, "location", None)
    if loc is not None:
        payload["location"] = loc
    print(json.dumps(payload, sort_keys=True))
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FEASBOUND_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    ns = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(ns)
        summary = COMMANDS[cfg.mode](cfg)
    except (ParseError, ValidationError, UnsupportedFeature) as exc:
        return _error(type(exc).__name__, exc, 2)
    except (ValueError, KeyError) as exc:
        return _error("UsageError", exc, 2)
    except EmptySeedSet as exc:
        return _error("EmptySeedSet", exc, 3)
    except FeasboundError as exc:
        return _error(type(exc).__name__, exc, 1)
    print(json.dumps(summary, sort_keys=True, default=export._json_default))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
