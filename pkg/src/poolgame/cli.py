"""Command line front end: ``poolgame <command> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .counterexamples import appendix_b_demo, demo_knapsack_game
from .equilibrium import (EQUILIBRIUM, INCONCLUSIVE, NO_EQUILIBRIUM, EngineOptions, jacobi, knapsack_kkt_demo,
                          mesh_grid, min_disequilibrium, monolithic_nc_heuristic, solve_subproblem, verify,
                          warmstart_nc, warmstart_pt, welfare_heuristic)
from .equilibrium.core import EquilibriumReport, layouts, named_point, payoff, point_from_named, rgap, PlayerReport
from .globalsolve import SolverError
from .io import dump_instance, emit_report, load_instance, mesh_csv, write_json, write_text
from .pooling import (CATALOG_NAMES, MODES, NASH_COURNOT, PRICE_TAKER, InstanceError, catalog, player_outputs)

EXIT_OK, EXIT_USAGE, EXIT_NO_EQ, EXIT_INCONCLUSIVE = 0, 2, 3, 4
VERDICT_EXIT = {EQUILIBRIUM: EXIT_OK, NO_EQUILIBRIUM: EXIT_NO_EQ, INCONCLUSIVE: EXIT_INCONCLUSIVE}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser):
    src = p.add_argument_group("instance")
    src.add_argument("--instance", help="instance JSON file")
    src.add_argument("--catalog", help=f"built-in instance: {', '.join(CATALOG_NAMES)}")
    src.add_argument("--base", help="base network file for the adhya1-mod / bental5-mod variants")
    src.add_argument("--mode-overrides", default="",
                     help="comma separated key=value pairs: mode=price_taker|nash_cournot, integer=true|false")
    cfg = p.add_argument_group("configuration")
    cfg.add_argument("--seed", type=int, default=0, help="warmstart seed (default 0)")
    cfg.add_argument("--eps", type=float, default=1e-3, help="equilibrium tolerance (absolute)")
    cfg.add_argument("--gap", type=float, default=1e-4, help="relative optimality gap for single-model solves")
    cfg.add_argument("--rmp-time", type=float, default=600.0, help="master problem time limit [s]")
    cfg.add_argument("--sub-time", type=float, default=60.0, help="best-response time limit [s]")
    cfg.add_argument("--grid-step", type=float, default=0.10, help="mesh grid step")
    cfg.add_argument("--workers", type=int, default=1, help="worker processes for independent solves")
    cfg.add_argument("--out-dir", default="poolgame-out", help="directory for report.json and CSV files")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poolgame", description="Equilibria among competing pooling-network players.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-player", help="best response of one player")
    _common(p)
    p.add_argument("--player", type=int, default=1, help="1-based player index")
    p.add_argument("--prices", default="", help="price-taker prices, e.g. H=9,L=15 (default: intercepts)")
    p.add_argument("--rivals", default="", help="Cournot rivals' total output per market, e.g. H=100")

    for name, hlp in (("welfare", "maximize welfare, then verify (price-taker)"),
                      ("mono-nc", "solve the monolithic Cournot model, then verify")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        if name == "mono-nc":
            p.add_argument("--relax-integrality", action="store_true")

    p = sub.add_parser("min-diseq", help="cutting-plane minimum disequilibrium")
    _common(p)
    p.add_argument("--seeds", type=int, default=1, help="number of warmstart seeds starting at --seed (0 = none)")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--early-stop", action="store_true", help="stop once the lower bound is positive")
    p.add_argument("--consumer-as-player", action="store_true")

    p = sub.add_parser("mesh", help="disequilibrium over a price grid")
    _common(p)
    p.add_argument("--grid-range", default="", help="per-market ranges, e.g. H=5:13,L=10:23")

    p = sub.add_parser("jacobi", help="simultaneous best-response iteration")
    _common(p)
    p.add_argument("--max-iters", type=int, default=50)

    p = sub.add_parser("warmstart", help="one warmstart round")
    _common(p)

    p = sub.add_parser("verify", help="check a candidate from a report.json")
    _common(p)
    p.add_argument("--point", required=True, help="report.json holding prices and per-player decisions")

    p = sub.add_parser("demo", help="counterexample demos")
    _common(p)
    p.add_argument("which", choices=["bilinear-box", "knapsack"])
    p.add_argument("--box", default="1,10,100", help="box half-widths for the bilinear-box demo")

    p = sub.add_parser("export-instance", help="write an instance as JSON")
    _common(p)
    p.add_argument("--out", help="output file (default: <out-dir>/instance.json)")
    return ap


def _pairs(text: str, what: str) -> dict[str, str]:
    out = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in part:
            raise UsageError(f"{what}: expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _floats(text: str, what: str) -> dict[str, float]:
    try:
        return {k: float(v) for k, v in _pairs(text, what).items()}
    except ValueError as exc:
        raise UsageError(f"{what}: {exc}") from None


def load_game(args):
    if bool(args.instance) == bool(args.catalog):
        raise UsageError("give exactly one of --instance or --catalog")
    ov = _pairs(args.mode_overrides, "--mode-overrides")
    unknown = set(ov) - {"mode", "integer"}
    if unknown:
        raise UsageError(f"--mode-overrides: unknown keys {sorted(unknown)}")
    mode = ov.get("mode")
    if mode is not None and mode not in MODES:
        raise UsageError(f"--mode-overrides: mode must be one of {MODES}")
    if args.instance:
        game = load_instance(args.instance)
    else:
        integer = ov.get("integer", "true").lower() in ("1", "true", "yes")
        game = catalog(args.catalog, base=args.base, integer=integer, mode=mode or PRICE_TAKER)
    if mode is not None and game.mode != mode:
        game = game.with_mode(mode)
    return game


def engine_options(args, **extra) -> EngineOptions:
    for name in ("eps", "gap", "rmp_time", "sub_time", "grid_step"):
        if not getattr(args, name) > 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    return EngineOptions(eps=args.eps, rel_gap=args.gap, sub_time_limit=args.sub_time,
                         rmp_time_limit=args.rmp_time, workers=args.workers, **extra)


def provenance(args, game) -> dict:
    cfg = {k: getattr(args, k) for k in ("seed", "eps", "gap", "rmp_time", "sub_time", "grid_step", "workers")}
    return {"package_version": __version__, "command": args.command, "catalog": args.catalog,
            "instance": args.instance, "mode_overrides": args.mode_overrides, "game": game.name,
            "mode": game.mode, "config": cfg}


# ---------------------------------------------------------------------------
# output


def _f(v, width=12, prec=4) -> str:
    if isinstance(v, str):
        return f"{v:>{width}}"
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return f"{'-':>{width}}"
    if isinstance(v, float) and math.isinf(v):
        return f"{('inf' if v > 0 else '-inf'):>{width}}"
    return f"{v:>{width}.{prec}f}"


def summary_table(report: EquilibriumReport) -> str:
    lines = [f"{report.method}  game={report.game}  mode={report.mode}",
             f"{'player':<10}{'profit':>12}{'bound':>12}{'delta':>12}{'RGAP%':>12}{'WS cuts':>9}"]
    for p in report.players:
        lines.append(f"{p.name:<10}{_f(p.profit)}{_f(p.profit_ub)}{_f(p.delta)}{p.rgap_percent:>12}{p.ws_cuts:>9d}")
    prices = ", ".join(f"{k}={v:.4f}" for k, v in sorted(report.prices.items()))
    lines.append(f"prices: {prices}")
    lines.append(f"eta: lower={_f(report.eta_lower, 0)} upper={_f(report.eta_upper, 0)}  "
                 f"PBF={report.pbf}  IBF={report.ibf}")
    lines.append(f"verdict: {report.verdict}")
    for n in report.notes:
        lines.append(f"note: {n}")
    return "\n".join(lines)


def _finish(report, game, args) -> int:
    emit_report(report, args.out_dir, game, provenance(args, game))
    print(summary_table(report))
    return VERDICT_EXIT[report.verdict]


# ---------------------------------------------------------------------------
# commands


def cmd_solve_player(args) -> int:
    game = load_game(args)
    j = args.player - 1
    if not 0 <= j < game.n_players:
        raise UsageError(f"--player must be between 1 and {game.n_players}")
    opts = engine_options(args)
    if game.mode == PRICE_TAKER:
        ctx = {m.output_node: m.alpha for m in game.markets}
        ctx.update(_floats(args.prices, "--prices"))
    else:
        ctx = {m.output_node: 0.0 for m in game.markets}
        ctx.update(_floats(args.rivals, "--rivals"))
    so = opts.sub_solve_options()
    so.rel_gap = args.gap
    res = solve_subproblem(game, j, ctx, so)
    lay = layouts(game)[j]
    status = EQUILIBRIUM if not res.hit_limit else INCONCLUSIVE
    d = res.bound - res.value
    prices = ctx if game.mode == PRICE_TAKER else {
        m.output_node: m.alpha - m.beta * (ctx.get(m.output_node, 0.0) + player_outputs(lay, res.point).get(m.output_node, 0.0))
        for m in game.markets}
    rep = EquilibriumReport("solve-player", game.name, game.mode, status, prices,
                            [res.point if i == j else np.zeros(l.size) for i, l in enumerate(layouts(game))],
                            -math.inf, math.inf, [PlayerReport(game.players[j].name, res.value, res.bound, d, rgap(d, res.bound))],
                            stats={"status": res.status, "nodes": res.nodes, "player": args.player},
                            timing={"total_s": res.time_s})
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pt = named_point(lay, res.point)
    write_json({"command": "solve-player", "game": game.name, "player": game.players[j].name,
                "status": res.status, "profit": res.value, "bound": res.bound, "context": ctx,
                "decisions": pt, "provenance": provenance(args, game), "timing": {"total_s": res.time_s}},
               out / "report.json")
    print(f"{game.players[j].name}: profit {res.value:.4f} (bound {res.bound:.4f}, {res.status})")
    for k in ("fin", "fout"):
        print(f"  {k}: " + ", ".join(f"{n}={v:.4f}" for n, v in pt[k].items()))
    if pt["u"]:
        print("  u: " + ", ".join(f"{n}={int(v)}" for n, v in pt["u"].items()))
    return EXIT_OK if rep.verdict == EQUILIBRIUM else EXIT_INCONCLUSIVE


def cmd_welfare(args) -> int:
    game = load_game(args)
    if game.mode != PRICE_TAKER:
        raise UsageError("welfare needs a price-taker game")
    return _finish(welfare_heuristic(game, engine_options(args)), game, args)


def cmd_mono_nc(args) -> int:
    game = load_game(args)
    if game.mode != NASH_COURNOT:
        raise UsageError("mono-nc needs a Cournot game")
    integ = False if args.relax_integrality else None
    return _finish(monolithic_nc_heuristic(game, engine_options(args), integ), game, args)


def cmd_min_diseq(args) -> int:
    game = load_game(args)
    if args.seeds < 0:
        raise UsageError("--seeds must be nonnegative")
    opts = engine_options(args, max_iters=args.max_iters, early_stop=args.early_stop,
                          seeds=tuple(range(args.seed, args.seed + args.seeds)),
                          consumer_as_player=args.consumer_as_player)
    return _finish(min_disequilibrium(game, opts), game, args)


def _grid_ranges(text):
    out = {}
    for k, v in _pairs(text, "--grid-range").items():
        try:
            lo, hi = (float(s) for s in v.split(":"))
        except ValueError:
            raise UsageError(f"--grid-range: expected lo:hi for {k}") from None
        if lo > hi:
            raise UsageError(f"--grid-range: empty range for {k}")
        out[k] = (lo, hi)
    return out


def cmd_mesh(args) -> int:
    game = load_game(args)
    opts = engine_options(args)
    ranges = _grid_ranges(args.grid_range) or None
    if ranges is not None:
        from .equilibrium.mesh import default_ranges
        ranges = {**default_ranges(game), **ranges}
    res = mesh_grid(game, ranges, args.grid_step, opts)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(res.axes) == 2:
        write_text(mesh_csv(res), out / "mesh.csv")
    at, val = res.argmin()
    write_json({"command": "mesh", "game": game.name, "axes": res.axes,
                "ranges": {a: [float(v[0]), float(v[-1])] for a, v in zip(res.axes, res.values)},
                "step": args.grid_step, "cells": int(res.eta.size),
                "finite_cells": int(np.isfinite(res.eta).sum()),
                "min_eta": val if math.isfinite(val) else "inf", "argmin": at, "hit_limit": res.hit_limit,
                "provenance": provenance(args, game), "timing": {"total_s": res.time_s}}, out / "report.json")
    where = ", ".join(f"{k}={v:.2f}" for k, v in at.items())
    print(f"mesh {game.name}: {res.eta.size} cells, {int(np.isfinite(res.eta).sum())} feasible")
    print(f"minimum eta {val:.4f} at {where}" if math.isfinite(val) else "no feasible cell")
    return EXIT_OK


def cmd_jacobi(args) -> int:
    game = load_game(args)
    opts = engine_options(args)
    res = jacobi(game, max_iters=args.max_iters, options=opts)
    lays = layouts(game)
    prices = {m.output_node: m.alpha - m.beta * sum(player_outputs(l, x).get(m.output_node, 0.0)
                                                   for l, x in zip(lays, res.points)) for m in game.markets}
    ver = verify(game, prices, res.points, opts)
    notes = [f"jacobi {'converged' if res.converged else 'did not converge'} after {res.rounds} rounds"]
    rep = EquilibriumReport("jacobi", game.name, game.mode, ver.verdict, prices, res.points, -math.inf,
                            float(sum(ver.deltas)), ver.players, [], "S", res.rounds,
                            {"converged": res.converged, "rounds": res.rounds,
                             "trajectory": [[float(v) for v in r] for r in res.trajectory]}, {}, notes)
    return _finish(rep, game, args)


def cmd_warmstart(args) -> int:
    game = load_game(args)
    opts = engine_options(args)
    lays = layouts(game)
    if game.mode == PRICE_TAKER:
        ws = warmstart_pt(game, args.seed, opts)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json({"command": "warmstart", "game": game.name, "seed": args.seed, "prices": ws.prices,
                    "points": [named_point(l, x) for l, x in zip(lays, ws.points)],
                    "provenance": provenance(args, game), "timing": {"total_s": ws.time_s}}, out / "report.json")
        print("prices: " + ", ".join(f"{k}={v:.4f}" for k, v in ws.prices.items()))
        for p, l, x in zip(game.players, lays, ws.points):
            print(f"{p.name}: payoff {payoff(game, game.players.index(p), l, x, ws.prices):.4f}")
        return EXIT_OK
    ws = warmstart_nc(game, args.seed, opts)
    cand = ws.candidate
    tot = {m.output_node: sum(player_outputs(l, x).get(m.output_node, 0.0) for l, x in zip(lays, cand))
           for m in game.markets}
    prices = {m.output_node: m.alpha - m.beta * tot[m.output_node] for m in game.markets}
    players = []
    for j, (l, x) in enumerate(zip(lays, cand)):
        rivals = {o: tot[o] - player_outputs(l, x).get(o, 0.0) for o in tot}
        pj = payoff(game, j, l, x, rivals)
        ub = max(ws.bounds[j], pj)
        players.append(PlayerReport(game.players[j].name, pj, ub, ub - pj, rgap(ub - pj, ub), 1))
    ok = max(p.delta for p in players) <= opts.eps and not ws.hit_limit
    notes = ["warmstart: N>2 generalization (extension)"] if ws.extension else []
    rep = EquilibriumReport("warmstart", game.name, game.mode, EQUILIBRIUM if ok else INCONCLUSIVE, prices, cand,
                            -math.inf, float(sum(p.delta for p in players)), players, [], "WS", 0,
                            {"seed": args.seed, "random_prices": ws.prices}, {"total_s": ws.time_s}, notes)
    return _finish(rep, game, args)


def cmd_verify(args) -> int:
    game = load_game(args)
    try:
        doc = json.loads(Path(args.point).read_text(encoding="utf-8"))
        lays = layouts(game)
        points = [point_from_named(l, p["decisions"]) for l, p in zip(lays, doc["players"])]
        prices = {k: float(v) for k, v in doc.get("prices", {}).items()}
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"--point: cannot read candidate ({exc})") from None
    if len(points) != game.n_players:
        raise UsageError("--point: player count does not match the game")
    ver = verify(game, prices, points, engine_options(args))
    rep = EquilibriumReport("verify", game.name, game.mode, ver.verdict, prices, points, -math.inf,
                            float(sum(ver.deltas)), ver.players)
    return _finish(rep, game, args)


def cmd_demo(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.which == "bilinear-box":
        try:
            Ms = [float(s) for s in args.box.split(",") if s.strip()]
        except ValueError:
            raise UsageError("--box: comma separated numbers expected") from None
        rep = appendix_b_demo(Ms)
        rows = [{"M": b.M, "optimum": b.optimum, "point": b.point, "point_deltas": b.point_deltas,
                 "origin_deltas": b.origin_deltas} for b in rep.boxes]
        write_json({"command": "demo", "which": "bilinear-box", "boxes": rows, "unboxed": rep.unboxed}, out / "report.json")
        for b in rep.boxes:
            print(f"M={b.M:g}: monolithic optimum {b.optimum:g} at ({b.point[0]:g}, {b.point[1]:g}); "
                  f"origin deltas {b.origin_deltas}")
        print(f"unboxed: {rep.unboxed}")
        return EXIT_OK
    game = demo_knapsack_game()
    rep = knapsack_kkt_demo(game)
    enc = lambda prof: [list(x) for x in prof]  # noqa: E731
    write_json({"command": "demo", "which": "knapsack", "profiles": [enc(p) for p in rep.profiles],
                "kkt_feasible": [enc(p) for p in rep.kkt_feasible], "equilibria": [enc(p) for p in rep.equilibria],
                "max_residual": max(rep.residuals.values())}, out / "report.json")
    print(f"feasible profiles: {len(rep.profiles)}; KKT-feasible: {len(rep.kkt_feasible)}; "
          f"equilibria: {len(rep.equilibria)}")
    for p in rep.equilibria:
        print("  equilibrium: " + " | ".join("".join(str(v) for v in x) for x in p))
    return EXIT_OK


def cmd_export(args) -> int:
    game = load_game(args)
    path = Path(args.out) if args.out else Path(args.out_dir) / "instance.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_instance(game, path)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"solve-player": cmd_solve_player, "welfare": cmd_welfare, "mono-nc": cmd_mono_nc,
            "min-diseq": cmd_min_diseq, "mesh": cmd_mesh, "jacobi": cmd_jacobi, "warmstart": cmd_warmstart,
            "verify": cmd_verify, "demo": cmd_demo, "export-instance": cmd_export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InstanceError, OSError, ValueError) as exc:
        print(f"poolgame {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"poolgame {args.command}: solver: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
