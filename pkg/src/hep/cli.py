"""Command-line front end: ``hep stationary|current|simulate|duality``.

Every run writes its outputs plus ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 configuration error, 3 divergent series, 4 state
space above the cap.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .current import (current_density_relation, potential_digest, stationary_current_finite,
                      write_curve_csv)
from .duality import DomainMeasure, domain_walk_check, intertwining_residual
from .errors import CapExceededError, DivergenceError, HEPError
from .generator import balance_residual, build_hep_generator, stationary_distribution, total_variation
from .measures import canonical_measure
from .potential import (PotentialSpec, bfamily_potential, check_bounded_rates, constant_potential,
                        geometric_potential, load_potential, log_potential)
from .simulator import Line, SimulationConfig, Torus, run_replicas, summarize

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_CAP = 0, 2, 3, 4
DEFAULT_CAP = 200_000


class ConfigError(HEPError, ValueError):
    pass


def resolve_potential(text: str) -> PotentialSpec:
    """A JSON file, or one of ``constant``, ``log``, ``bfamily:<b>``, ``geometric:<c>``."""
    path = Path(text)
    if path.exists():
        return load_potential(path)
    name, _, arg = text.partition(":")
    try:
        if name == "constant":
            return constant_potential()
        if name == "log":
            return log_potential()
        if name == "bfamily":
            return bfamily_potential(float(arg))
        if name == "geometric":
            return geometric_potential(float(arg))
    except ValueError as exc:
        raise ConfigError(f"bad potential argument {text!r}") from exc
    raise ConfigError(f"no potential file or known family named {text!r}")


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive of stop) or a comma list; empty gives no points."""
    text = text.strip()
    if not text:
        return np.zeros(0)
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return np.round(start + step * np.arange(n), 12)
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad density grid {text!r}") from exc


def parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, config: dict, outputs: list[str], started: float,
                    seed: int | None = None) -> None:
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": config,
        "seed": seed,
        "version": __version__,
        "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": time.time() - started,
        "outputs": outputs,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def _write_json(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


# -- subcommands ------------------------------------------------------------------

def cmd_stationary(args) -> int:
    started = time.time()
    spec = resolve_potential(args.potential)
    L, N = args.L, args.N
    if not 0 <= N <= L:
        raise ConfigError(f"need 0 <= N <= L, got L={L}, N={N}")
    size = math.comb(L, N)
    if size > args.cap:
        raise CapExceededError(
            f"C({L},{N}) = {size} states exceeds the cap {args.cap}; use `hep simulate` instead")
    out = _out_dir(args)
    can = canonical_measure(L, N, spec)
    if 1 <= N <= L - 1:
        gen = build_hep_generator(L, N, spec)
        stat = stationary_distribution(gen)
        p_stat = stat.probabilities
        resid_stat = balance_residual(stat, gen)
        resid_can = balance_residual(can, gen)
    else:
        p_stat = np.ones(1)
        resid_stat = resid_can = 0.0
    p_can = can.probabilities
    tv = total_variation(p_stat, p_can)
    with open(out / "stationary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["state", "stationary", "headway_measure"])
        for row, a, b in zip(can.states, p_stat, p_can):
            occ = ["0"] * L
            for x in row:
                occ[x] = "1"
            wr.writerow(["".join(occ), repr(float(a)), repr(float(b))])
    summary = {"L": L, "N": N, "states": size, "total_variation": tv,
               "balance_residual_stationary": resid_stat,
               "balance_residual_headway_measure": resid_can}
    _write_json(out / "summary.json", summary)
    print(f"L={L} N={N} states={size} TV(stationary, headway measure)={tv:.3e} "
          f"balance residual={resid_can:.3e}")
    _write_manifest(out, args, {"potential": spec.to_dict(), "L": L, "N": N},
                    ["stationary.csv", "summary.json"], started)
    return EXIT_OK


def cmd_current(args) -> int:
    started = time.time()
    spec = resolve_potential(args.potential)
    grid = parse_grid(args.rho)
    Ls = parse_ints(args.L) if args.L else []
    out = _out_dir(args)
    ok, sup = check_bounded_rates(spec, warn=False)
    print(f"boundedness of y_n/y_(n+1) (read as a bounded sequence): "
          f"{'ok' if ok else 'FAILED'}, sup over stored range = {sup:.6g}")
    curve = current_density_relation(spec, grid)
    path = out / "current.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# u_c={curve.u_c!r} rho_c={curve.rho_c!r} "
                 f"potential_digest={potential_digest(spec)}\n")
        wr = csv.writer(fh)
        wr.writerow(["rho", "j", "branch", "u"] + [f"j_L{L}" for L in Ls])
        for i, rho in enumerate(curve.rho):
            finite = [repr(stationary_current_finite(L, int(math.floor(rho * L + 1e-9)), spec))
                      for L in Ls]
            wr.writerow([repr(float(rho)), repr(float(curve.j[i])), curve.branch[i],
                         repr(float(curve.u[i]))] + finite)
    print(f"u_c={curve.u_c:.12g} rho_c={curve.rho_c:.12g} points={len(grid)}")
    _write_manifest(out, args, {"potential": spec.to_dict(), "rho": grid.tolist(), "L": Ls,
                                "u_c": curve.u_c, "rho_c": curve.rho_c},
                    ["current.csv"], started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.time()
    spec = resolve_potential(args.potential)
    if (args.torus is None) == (args.line is None):
        raise ConfigError("give exactly one of --torus L,N or --line N[,x_star]")
    if args.torus is not None:
        vals = parse_ints(args.torus)
        if len(vals) != 2:
            raise ConfigError("--torus expects L,N")
        geo = Torus(*vals)
        obs = {"current", "headway_hist"}
    else:
        vals = parse_ints(args.line)
        if len(vals) not in (1, 2):
            raise ConfigError("--line expects N or N,x_star")
        geo = Line(*vals)
        obs = {"leftmost", "headway_hist"}
    cfg = SimulationConfig(spec, geo, args.t, seed=args.seed, replicas=args.replicas,
                           observables=obs, t_burn=args.burn)
    out = _out_dir(args)
    results = run_replicas(cfg, workers=args.workers)
    report = summarize(results)
    if isinstance(geo, Torus) and 1 <= geo.N <= geo.L - 1:
        report["exact_current"] = (spec.r - spec.l) * stationary_current_finite(geo.L, geo.N, spec)
    if isinstance(geo, Line):
        disp = np.array([s.leftmost_final[0] - s.leftmost_initial[0] for s in results], dtype=float)
        report["leftmost_displacement_mean"] = float(disp.mean())
        report["leftmost_displacement_var"] = float(disp.var(ddof=1)) if len(disp) > 1 else None
        report["poisson_mean"] = spec.w * args.t
    report["config"] = cfg.to_dict()
    _write_json(out / "simulation.json", report)
    with open(out / "replicas.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["replica", "events", "right_jumps", "left_jumps", "leftmost_final"])
        for i, s in enumerate(results):
            wr.writerow([i, s.events, s.right_jumps, s.left_jumps, s.leftmost_final[0] if s.leftmost_final else ""])
    if "current" in report:
        print(f"current = {report['current']:.6g} +- {report['current_se']:.3g}"
              + (f" (exact {report['exact_current']:.6g})" if "exact_current" in report else ""))
    _write_manifest(out, args, cfg.to_dict(), ["simulation.json", "replicas.csv"], started,
                    seed=args.seed)
    return EXIT_OK


def cmd_duality(args) -> int:
    started = time.time()
    spec = resolve_potential(args.potential)
    window = parse_ints(args.window)
    window = window[0] if len(window) == 1 else tuple(window)
    out = _out_dir(args)
    residual = intertwining_residual(args.N, window, spec)
    dm = DomainMeasure(spec, 0, args.N)
    report = domain_walk_check(dm, args.t, args.replicas, seed=args.seed)
    extra = {"intertwining_residual": residual, "Z": dm.Z, "window": window,
             "config_digest": potential_digest(spec)}
    report.write_json(out / "duality.json", extra)
    report.write_csv(out / "leftmost.csv")
    print(f"intertwining residual = {residual:.3e}; leftmost TV = {report.leftmost_tv:.4f} "
          f"(chi2 p = {report.leftmost_chi2_p:.3g}); gap TV = {report.gap_tv:.4f}; "
          f"mean displacement = {report.mean_displacement:.4f} +- {report.mean_displacement_se:.4f}")
    _write_manifest(out, args, {"potential": spec.to_dict(), "N": args.N, "window": window,
                                "t": args.t, "replicas": args.replicas},
                    ["duality.json", "leftmost.csv"], started, seed=args.seed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--potential", required=True,
                       help="JSON file, or constant | log | bfamily:<b> | geometric:<c>")
        p.add_argument("--out", default="hep_out", help="output directory")

    p = sub.add_parser("stationary", help="exact stationary law vs the headway measure")
    common(p)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="maximum number of states")
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("current", help="current-density relation and finite-size currents")
    common(p)
    p.add_argument("--rho", required=True, help="start:stop:step or comma list")
    p.add_argument("--L", default="", help="comma-separated system sizes")
    p.set_defaults(func=cmd_current)

    p = sub.add_parser("simulate", help="kinetic Monte Carlo")
    common(p)
    p.add_argument("--torus", help="L,N")
    p.add_argument("--line", help="N or N,x_star (TAHEP on Z)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn", type=float, default=None, help="burn-in time (default 0.1 t)")
    p.add_argument("--workers", type=int, default=None, help="processes (default $HEP_THREADS or 1)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("duality", help="intertwining residual and domain random walk check")
    common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--window", default="24", help="width, or a,b")
    p.add_argument("--t", type=float, default=5.0)
    p.add_argument("--replicas", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_duality)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else [str(a) for a in argv]
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (HEPError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
