"""Command-line front end: ``roadfield <subcommand> --config PATH [--out DIR] [--quiet]``.

Exit status is 0 on success, 1 on numerical failure (including a failed
check such as a KPP violation or an audit inequality) and 2 on a
configuration error. Artifacts written before a failure are removed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from . import analysis as an
from . import dynamics as dyn
from .config import RunConfig, check_writable, config_hash, parse_config
from .eigen import principal_eigenpair
from .errors import ConfigError, RoadfieldError
from .grids import Geometry, assemble_coupled_operator, dump_matrix
from .model import validate_hypotheses

SUBCOMMANDS = ("eigen", "sweep", "evolve", "classify", "road-effect", "amplitude", "audit", "validate")

log = logging.getLogger("roadfield")


class CheckFailed(RoadfieldError):
    """A run completed but its verdict is a failure (exit status 1)."""


def _num(x):
    return "%.17g" % x


def _clean(obj):
    # JSON has no NaN/inf; numpy scalars are not serializable
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


class Writer:
    """Tracks every file written so a failed run can be rolled back."""

    def __init__(self, directory):
        self.directory = directory
        self.written = []
        self.made_dirs = []

    def path(self, name):
        full = os.path.join(self.directory, name)
        parent = os.path.dirname(full)
        if not os.path.isdir(parent):
            os.makedirs(parent)
            self.made_dirs.append(parent)
        self.written.append(name)
        return full

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(_clean(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def csv(self, name, header, rows):
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")

    def rollback(self):
        for name in self.written:
            try:
                os.remove(os.path.join(self.directory, name))
            except FileNotFoundError:
                pass
        for d in reversed(self.made_dirs):
            try:
                os.rmdir(d)
            except OSError:
                pass


def _sweep_csv(out, sweep):
    out.csv("sweep.csv", ["size", "lambda", "residual", "iters"], sweep.to_rows())


def _trajectory_csv(out, outcome):
    out.csv("trajectory.csv", ["t", "sup_u", "sup_v", "min_u", "min_v", "deriv_residual"], outcome.sup_history)


def _snapshots(out, outcome):
    for s in outcome.snapshots:
        g = s.geometry
        x, y = g.x_nodes(), g.y_nodes()
        rows = [(_num(xi), "road", _num(ui)) for xi, ui in zip(x, s.u)]
        for j, yj in enumerate(y):
            rows.extend((_num(xi), _num(yj), _num(vi)) for xi, vi in zip(x, s.v[j]))
        out.csv(f"snapshots/t_{s.t:.6f}.csv", ["x", "y", "value"], rows)


def _outcome_dict(outcome, params, reaction):
    d = {"kind": outcome.kind, "t_at_threshold": outcome.t_at_threshold, "t_final": outcome.final.t,
         "sup_final": outcome.final.sup(), "projections": outcome.projections}
    if outcome.steady is not None and outcome.final.has_road:
        d["max_exchange_residual"] = float(np.max(np.abs(dyn.exchange_residual(outcome.final, params, reaction))))
        d["u_mean"] = float(np.mean(outcome.final.u))
        d["v_bottom_mean"] = float(np.mean(outcome.final.v[0]))
    return d


def _run_evolution(cfg: RunConfig, keep_snapshots):
    n = cfg.numerics
    geom = dyn.dynamic_geometry(cfg.model, n.hx, n.hy, n.dyn_height, n.periods_k)
    return dyn.evolve(dyn.bump_datum(geom, cfg.reaction.M), cfg.model, cfg.reaction, n.dt, n.t_max,
                      stride=cfg.stride, snapshot_times=cfg.snapshot_times if keep_snapshots else ())


def cmd_validate(cfg, out):
    rep = validate_hypotheses(cfg.reaction)
    out.json("report.json", rep.to_dict())
    lines = [f"{name}: {'pass' if ok else 'FAIL'}" + (f" ({rep.details[name]})" if not ok and name in rep.details else "")
             for name, ok in rep.checks.items()]
    if not rep.passed:
        failed = [k for k, ok in rep.checks.items() if not ok]
        raise CheckFailed("hypotheses violated: " + ", ".join(failed), lines)
    return lines


def cmd_eigen(cfg, out):
    n = cfg.numerics
    R = cfg.eigen_size if cfg.eigen_size is not None else n.sizes[-1]
    op = assemble_coupled_operator(Geometry.truncated_road_field(R, R, n.hx, n.hy), cfg.model, cfg.reaction)
    if cfg.outputs.emit_matrices:
        dump_matrix(op, out.path("matrix.txt"))
    res = principal_eigenpair(op, tol=n.tol, maxiter=n.maxiter)
    g = op.geometry
    x, y = g.x_nodes(), g.y_nodes()
    out.csv("eigenfunction_road.csv", ["x", "u"], zip(x, res.vec_road))
    vf = res.vec_field.reshape(g.ny, g.nx)
    out.csv("eigenfunction_field.csv", ["x", "y", "v"],
            ((xi, yj, vf[j, i]) for j, yj in enumerate(y) for i, xi in enumerate(x)))
    out.json("report.json", {"size": R, "order": op.order, "lambda": res.lam, "residual": res.residual,
                             "iters": res.iters, "shift": res.shift, "min_entry": res.min_entry})
    return [f"lambda_1(R={R:g}) = {res.lam:.12g}  residual {res.residual:.2e}  iters {res.iters}"]


def cmd_sweep(cfg, out):
    sw = an.estimate_lambda1(cfg.model, cfg.reaction, cfg.numerics, cfg.numerics.lambda1_method or "truncated")
    _sweep_csv(out, sw)
    out.json("report.json", {"family": sw.kind, "limit_estimate": sw.limit_estimate, "last_value": sw.lambdas[-1],
                             "monotone": sw.monotone, "diagnostic": sw.diagnostic})
    lines = [f"R={s:g}: {lam:.12g}" for s, lam in zip(sw.sizes, sw.lambdas)]
    lines.append(f"limit estimate {sw.limit_estimate:.10g} (monotone: {sw.monotone})")
    if not sw.monotone:
        raise CheckFailed("truncation sweep is not monotone: " + sw.diagnostic, lines)
    return lines


def cmd_evolve(cfg, out):
    outcome = _run_evolution(cfg, cfg.outputs.emit_snapshots)
    _trajectory_csv(out, outcome)
    if cfg.outputs.emit_snapshots:
        _snapshots(out, outcome)
    out.json("report.json", _outcome_dict(outcome, cfg.model, cfg.reaction))
    return [f"{outcome.kind} at t = {outcome.final.t:g}, sup = {outcome.final.sup():.6g}"]


def cmd_classify(cfg, out):
    v = an.classify(cfg.model, cfg.reaction, cfg.numerics)
    _sweep_csv(out, v.sweep)
    if v.outcome is not None:
        _trajectory_csv(out, v.outcome)
    d = v.to_dict()
    if v.outcome is not None:
        d["dynamics"] = _outcome_dict(v.outcome, cfg.model, cfg.reaction)
    out.json("verdict.json", d)
    lines = [f"lambda_1 estimate {v.lambda1_estimate:.8g} ({v.sign}) -> {v.predicted}",
             f"dynamics: {v.dynamics_outcome}; {d['status']}"]
    if v.agreement is False:
        raise CheckFailed("eigenvalue prediction contradicted by the dynamics", lines)
    return lines


def cmd_road_effect(cfg, out):
    rep = an.road_effect(cfg.model, cfg.reaction, cfg.numerics)
    _sweep_csv(out, rep.sweep)
    out.json("report.json", rep.to_dict())
    lines = [f"with road {rep.lambda_with_road:.8g} ({rep.sign_with}), without {rep.lambda_without_road:.8g} "
             f"({rep.sign_without})", f"signs agree: {rep.signs_agree}; ordering holds: {rep.ordering_holds}"]
    if rep.signs_agree is False or not rep.ordering_holds:
        raise CheckFailed("road-effect comparison failed", lines)
    return lines


def cmd_amplitude(cfg, out):
    rep = an.amplitude_sweep(cfg.model, cfg.reaction, cfg.numerics.alphas, cfg.numerics)
    out.csv("amplitude.csv", ["alpha", "lambda", "sign"], ((a, lam, s) for a, lam, s in rep.rows))
    out.json("report.json", rep.to_dict())
    lines = [f"alpha={a:g}: {lam:.8g} ({s})" for a, lam, s in rep.rows]
    lines.append(f"sign changes: {rep.sign_changes}; transition observed: {rep.transition_observed}")
    return lines


def cmd_audit(cfg, out):
    rep = an.ordering_audit(cfg.model, cfg.reaction, cfg.numerics.sizes, cfg.numerics)
    out.json("report.json", rep.to_dict())
    lines = [f"{'ok  ' if c.passed else 'FAIL'} {c.name} [R={c.size:g}]: {c.lhs:.10g} <= {c.rhs:.10g} + {c.tol:g}"
             for c in rep.checks]
    if not rep.passed:
        raise CheckFailed("ordering audit failed: " + "; ".join(f"{c.name} at R={c.size:g}" for c in rep.failures),
                          lines)
    return lines


COMMANDS = {
    "eigen": cmd_eigen, "sweep": cmd_sweep, "evolve": cmd_evolve, "classify": cmd_classify,
    "road-effect": cmd_road_effect, "amplitude": cmd_amplitude, "audit": cmd_audit, "validate": cmd_validate,
}


def run_subcommand(name: str, cfg: RunConfig, quiet: bool = True) -> int:
    """Run one subcommand and write its artifacts plus ``manifest.json``; return the exit status."""
    if name not in COMMANDS:
        raise ConfigError(f"unknown subcommand {name!r}", "subcommand")
    check_writable(cfg.outputs.directory)
    out = Writer(cfg.outputs.directory)
    start = time.perf_counter()
    try:
        lines = COMMANDS[name](cfg, out)
    except CheckFailed as exc:
        out.rollback()
        msg, lines = exc.args
        if not quiet:
            print("\n".join(lines))
        print(f"roadfield {name}: {msg}", file=sys.stderr)
        return 1
    except (ConfigError, RoadfieldError, ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        out.rollback()
        if isinstance(exc, ConfigError):
            print(f"roadfield {name}: config error: {exc}", file=sys.stderr)
            return 2
        print(f"roadfield {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.rollback()
        raise
    artifacts = sorted(out.written)
    manifest = {"subcommand": name, "config_hash": config_hash(cfg), "artifacts": artifacts,
                "wall_clock_seconds": time.perf_counter() - start, "version": f"v{__version__}"}
    with open(os.path.join(cfg.outputs.directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(_clean(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        print("\n".join(lines))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="roadfield", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides outputs.directory)")
    p.add_argument("--quiet", action="store_true", help="suppress the text summary")
    p.add_argument("--version", action="version", version=f"roadfield {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(name)s: %(message)s")
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        if args.out:
            cfg = replace(cfg, outputs=replace(cfg.outputs, directory=args.out))
        return run_subcommand(args.subcommand, cfg, quiet=args.quiet)
    except OSError as exc:
        print(f"roadfield: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"roadfield: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
