"""Instance files, reports and CSV outputs."""

from __future__ import annotations

import csv
import io as _io
import json
import math
import re
from json.decoder import scanstring
from pathlib import Path

import jsonschema
import numpy as np

from .pooling import GameInstance, InstanceError, Market, PoolingInstance, SemanticError

FORMAT_VERSION = "1"


class SchemaError(InstanceError):
    pass


_NUM = {"type": "number"}
_NAMES = {"type": "array", "items": {"type": "string"}}
_NUM_MAP = {"type": "object", "additionalProperties": _NUM}
_NESTED = {"type": "object", "additionalProperties": _NUM_MAP}

INSTANCE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "mode", "players", "markets"],
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "name": {"type": "string"},
        "mode": {"enum": ["price_taker", "nash_cournot"]},
        "players": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["nodes", "arcs", "specs", "cin", "fmax", "cvar"],
                "properties": {
                    "name": {"type": "string"},
                    "nodes": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["inputs", "pools", "outputs"],
                        "properties": {"inputs": _NAMES, "pools": _NAMES, "outputs": _NAMES},
                    },
                    "arcs": {"type": "array",
                             "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}},
                    "specs": _NAMES,
                    "cin": _NESTED,
                    "cmin": _NESTED,
                    "cmax": _NESTED,
                    "fmin": _NUM_MAP,
                    "fmax": _NUM_MAP,
                    "cvar": _NUM_MAP,
                    "cfixed": _NUM_MAP,
                },
            },
        },
        "markets": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["output_node", "alpha", "beta"],
                "properties": {"output_node": {"type": "string"}, "alpha": _NUM, "beta": _NUM},
            },
        },
    },
}


# ---------------------------------------------------------------------------
# locating JSON paths in the source text


_WS = re.compile(r"[ \t\n\r]*")


def _positions(text: str) -> dict[tuple, int]:
    """Character offset of every value (and object key) by JSON path."""
    dec = json.JSONDecoder()
    out: dict[tuple, int] = {}

    def skip(pos):
        return _WS.match(text, pos).end()

    def value(pos, path):
        pos = skip(pos)
        out.setdefault(path, pos)
        ch = text[pos]
        if ch == "{":
            pos = skip(pos + 1)
            if text[pos] == "}":
                return pos + 1
            while True:
                pos = skip(pos)
                key_pos = pos
                key, pos = scanstring(text, pos + 1)
                out[path + (key,)] = key_pos
                pos = skip(pos) + 1  # ':'
                pos = skip(value(pos, path + (key,)))
                if text[pos] == ",":
                    pos += 1
                    continue
                return pos + 1
        if ch == "[":
            pos = skip(pos + 1)
            if text[pos] == "]":
                return pos + 1
            i = 0
            while True:
                pos = skip(value(pos, path + (i,)))
                i += 1
                if text[pos] == ",":
                    pos += 1
                    continue
                return pos + 1
        _, end = dec.raw_decode(text, pos)
        return end

    value(0, ())
    return out


def _line_of(text: str, path: tuple) -> int | None:
    try:
        pos = _positions(text)
    except (ValueError, IndexError):
        return None
    path = tuple(path)
    while path not in pos and path:
        path = path[:-1]
    p = pos.get(path)
    return None if p is None else text.count("\n", 0, p) + 1


def _fmt_path(path) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s or "<root>"


# ---------------------------------------------------------------------------
# instance files


def instance_to_dict(game: GameInstance) -> dict:
    players = []
    for p in game.players:
        d = {
            "name": p.name,
            "nodes": {"inputs": list(p.inputs), "pools": list(p.pools), "outputs": list(p.outputs)},
            "arcs": [[a, b] for a, b in p.arcs],
            "specs": list(p.specs),
            "cin": {i: dict(v) for i, v in p.cin.items()},
            "cmin": {o: dict(v) for o, v in p.cmin.items()},
            "cmax": {o: dict(v) for o, v in p.cmax.items()},
            "fmin": dict(p.fmin),
            "fmax": {k: v for k, v in p.fmax.items() if math.isfinite(v)},
            "cvar": dict(p.cvar),
            "cfixed": dict(p.cfixed),
        }
        players.append(d)
    return {
        "version": FORMAT_VERSION,
        "name": game.name,
        "mode": game.mode,
        "players": players,
        "markets": [{"output_node": m.output_node, "alpha": m.alpha, "beta": m.beta} for m in game.markets],
    }


def dump_instance(game: GameInstance, path=None) -> str:
    text = json.dumps(instance_to_dict(game), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


def parse_instance(text: str, source: str = "<string>") -> GameInstance:
    """Validate and build a game; errors name the source line and field."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(INSTANCE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = tuple(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            if extra:
                path = path + (extra[0],)
        line = _line_of(text, path)
        where = f"{source}:{line}" if line else source
        raise SchemaError(f"{where}: {_fmt_path(path)}: {err.message}")
    return _build(doc, text, source)


def _build(doc: dict, text: str, source: str) -> GameInstance:
    def fail(path, msg, cls=SemanticError):
        line = _line_of(text, path)
        where = f"{source}:{line}" if line else source
        raise cls(f"{where}: {_fmt_path(path)}: {msg}") from None

    players = []
    for j, d in enumerate(doc["players"]):
        try:
            players.append(PoolingInstance(
                name=d.get("name", f"player{j + 1}"),
                inputs=list(d["nodes"]["inputs"]), pools=list(d["nodes"]["pools"]),
                outputs=list(d["nodes"]["outputs"]),
                arcs=[tuple(a) for a in d["arcs"]], specs=list(d["specs"]),
                cin=d["cin"], fmax=d["fmax"], cvar=d["cvar"],
                cmin=d.get("cmin", {}), cmax=d.get("cmax", {}),
                fmin=d.get("fmin", {}), cfixed=d.get("cfixed", {})))
        except SemanticError as exc:
            fail(("players", j), str(exc), type(exc))
    markets = []
    for k, m in enumerate(doc["markets"]):
        try:
            markets.append(Market(m["output_node"], float(m["alpha"]), float(m["beta"])))
        except SemanticError as exc:
            fail(("markets", k), str(exc), type(exc))
    outputs = {o for p in players for o in p.outputs}
    for k, m in enumerate(markets):
        if m.output_node not in outputs:
            fail(("markets", k, "output_node"), f"market for unknown output node {m.output_node!r}")
    try:
        return GameInstance(players, markets, doc["mode"], doc.get("name", Path(source).stem or "game"))
    except SemanticError as exc:
        fail(("markets",), str(exc), type(exc))


def load_instance(path) -> GameInstance:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{p}: not UTF-8 ({exc.reason})") from None
    return parse_instance(text, str(p))


# ---------------------------------------------------------------------------
# reports


def _num(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    return v


def report_to_dict(report, game: GameInstance | None = None, provenance: dict | None = None) -> dict:
    from .equilibrium.core import named_point, layouts

    lays = layouts(game) if game is not None else None
    players = []
    for j, p in enumerate(report.players):
        d = {"name": p.name, "profit": _num(p.profit), "profit_ub": _num(p.profit_ub), "delta": _num(p.delta),
             "rgap": p.rgap if isinstance(p.rgap, str) else _num(p.rgap), "rgap_percent": p.rgap_percent,
             "ws_cuts": p.ws_cuts}
        if lays is not None and j < len(report.points):
            pt = named_point(lays[j], report.points[j])
            d["decisions"] = {k: {kk: _num(vv) for kk, vv in v.items()} for k, v in pt.items()}
        players.append(d)
    return {
        "method": report.method,
        "game": report.game,
        "mode": report.mode,
        "verdict": report.verdict,
        "prices": {k: _num(v) for k, v in sorted(report.prices.items())},
        "eta_lower": _num(report.eta_lower),
        "eta_upper": _num(report.eta_upper),
        "phase_best_found": report.pbf,
        "iteration_best_found": report.ibf,
        "players": players,
        "iterations": [{"iter": r.iter, "eta_lb": _num(r.eta_lb), "eta_ub": _num(r.eta_ub),
                        "cuts_total": r.cuts_total} for r in report.log],
        "stats": {k: _num(v) for k, v in sorted(report.stats.items())},
        "notes": list(report.notes),
        "provenance": provenance or {},
        "timing": {**{k: _num(v) for k, v in sorted(report.timing.items())},
                   "iterations": [{"iter": r.iter, "master_time_s": _num(r.master_time_s),
                                   "sub_time_s": _num(r.sub_time_s)} for r in report.log]},
    }


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8", newline="\n")


def _fixed(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


ITERATION_COLUMNS = ["iter", "eta_lb", "eta_ub", "master_time_s", "sub_time_s", "cuts_total"]


def iterations_csv(log) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ITERATION_COLUMNS)
    for r in log:
        w.writerow([r.iter, _fixed(r.eta_lb), _fixed(r.eta_ub), _fixed(r.master_time_s), _fixed(r.sub_time_s),
                    r.cuts_total])
    return buf.getvalue()


def mesh_csv(result) -> str:
    """Matrix CSV: first axis down the rows, second across the columns."""
    if len(result.axes) != 2:
        raise ValueError("matrix output needs exactly two price axes")
    a, b = result.axes
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{a}\\{b}"] + [_fixed(v) for v in result.values[1]])
    for i, va in enumerate(result.values[0]):
        w.writerow([_fixed(va)] + [_fixed(x) for x in result.eta[i]])
    return buf.getvalue()


def write_text(text: str, path):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def emit_report(report, out_dir, game: GameInstance | None = None, provenance: dict | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report_to_dict(report, game, provenance), out / "report.json")
    write_text(iterations_csv(report.log), out / "iterations.csv")
    return out / "report.json", out / "iterations.csv"
