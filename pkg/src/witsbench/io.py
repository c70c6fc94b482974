"""Plain-text formats: strategy files, CSV tables, density DAT files, manifests.

Strategy file (one ``key=value`` per line, ``#`` starts a comment)::

    kind=lope          # zero | linear | bpsk | two-point | lope
    n=2                # lope only; must match the list lengths
    a=0.2,0.5          # amplitudes (lope); a single value for bpsk/two-point
    B=0,0.8            # breakpoints (lope)
    P=0.25             # power target (linear)

CSV files start with a ``schema,<version>`` row followed by the column
header. Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import math
import os
import shlex
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .strategies import Bpsk, Linear, Lope, LopeParams, TwoPoint, Zero

SCHEMA_VERSION = 1


class StrategyParseError(ValueError):
    def __init__(self, message, line=0, column=0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _parse_list(value, line, column):
    out = []
    offset = 0
    for tok in value.split(","):
        try:
            out.append(float(tok))
        except ValueError:
            raise StrategyParseError(f"not a number: {tok.strip()!r}", line, column + offset) from None
        offset += len(tok) + 1
    return out


def parse_key_values(text: str) -> list:
    """Split ``key=value`` lines into (key, value, line, value_column) tuples."""
    items = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise StrategyParseError("expected key=value", lineno, col)
        key, value = line.split("=", 1)
        col = len(key) + 2 + (len(value) - len(value.lstrip()))
        items.append((key.strip(), value.strip(), lineno, col))
    return items


def strategy_from_mapping(fields: dict, where: dict | None = None):
    """Build a strategy from string fields; ``where`` maps keys to (line, column)."""
    where = where or {}
    pos = lambda k: where.get(k, (0, 0))
    kind = fields.get("kind")
    if kind is None:
        raise StrategyParseError("missing 'kind'", 0, 0)

    def nums(key, required=True):
        if key not in fields:
            if required:
                raise StrategyParseError(f"missing '{key}' for kind={kind}", *pos("kind"))
            return None
        return _parse_list(fields[key], *pos(key))

    def scalar(key):
        vals = nums(key)
        if len(vals) != 1:
            raise StrategyParseError(f"'{key}' takes a single value", *pos(key))
        return vals[0]

    try:
        if kind == "zero":
            return Zero()
        if kind == "linear":
            return Linear(scalar("P"))
        if kind == "bpsk":
            return Bpsk(scalar("a"))
        if kind in ("two-point", "two_point", "twopoint"):
            return TwoPoint(scalar("a"))
        if kind == "lope":
            a = nums("a")
            B = nums("B")
            if "n" in fields:
                try:
                    n = int(fields["n"])
                except ValueError:
                    raise StrategyParseError(f"n must be an integer, got {fields['n']!r}", *pos("n")) from None
                if n != len(a) or n != len(B):
                    raise StrategyParseError(f"n={n} does not match len(a)={len(a)}, len(B)={len(B)}", *pos("n"))
            return Lope(LopeParams(a, B))
    except StrategyParseError:
        raise
    except ValueError as exc:
        raise StrategyParseError(str(exc), *pos("kind")) from None
    raise StrategyParseError(f"unknown strategy kind {kind!r}", *pos("kind"))


def parse_strategy(text: str):
    fields, where = {}, {}
    for key, value, line, col in parse_key_values(text):
        fields[key] = value
        where[key] = (line, col)
    return strategy_from_mapping(fields, where)


def read_strategy(path):
    return parse_strategy(Path(path).read_text())


def format_strategy(s) -> str:
    if isinstance(s, Zero):
        lines = ["kind=zero"]
    elif isinstance(s, Linear):
        lines = ["kind=linear", f"P={fmt(s.P)}"]
    elif isinstance(s, Bpsk):
        lines = ["kind=bpsk", f"a={fmt(s.a)}"]
    elif isinstance(s, TwoPoint):
        lines = ["kind=two-point", f"a={fmt(s.a)}"]
    elif isinstance(s, Lope):
        p = s.params
        lines = [
            "kind=lope",
            f"n={p.n}",
            "a=" + ",".join(fmt(v) for v in p.a),
            "B=" + ",".join(fmt(v) for v in p.B),
        ]
    else:
        raise TypeError(f"cannot serialize {s!r}")
    return "\n".join(lines) + "\n"


def write_strategy(path, s):
    Path(path).write_text(format_strategy(s))


def csv_text(columns, rows) -> str:
    out = [f"schema,{SCHEMA_VERSION}", ",".join(columns)]
    out.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(out) + "\n"


def read_csv(path):
    """Return (columns, rows of floats) from a schema-versioned CSV."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("schema,"):
        raise ValueError(f"{path}: missing schema row")
    version = int(lines[0].split(",")[1])
    if version != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {version}")
    columns = lines[1].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[2:] if line]
    return columns, rows


def frontier_columns(n):
    return (
        ["omega", "k_squared", "P", "S", "objective", "converged"]
        + [f"a_{i + 1}" for i in range(n)]
        + [f"B_{i + 1}" for i in range(n)]
    )


def frontier_csv(sweep) -> str:
    rows = []
    for r in sweep.records:
        rows.append(
            [r.omega, r.k_squared, r.point.P, r.point.S, r.objective_value, bool(r.converged)]
            + list(r.params.a) + list(r.params.B)
        )
    return csv_text(frontier_columns(sweep.n), rows)


def read_frontier(path):
    """Frontier CSV back into (omega, P, S, objective, converged, LopeParams) tuples."""
    columns, rows = read_csv(path)
    n = (len(columns) - 6) // 2
    out = []
    for row in rows:
        out.append((row[0], row[2], row[3], row[4], bool(row[5]), LopeParams(row[6:6 + n], row[6 + n:])))
    return out


def density_text(x, f) -> str:
    lines = ["x fX"]
    lines.extend(f"{fmt(a)} {fmt(b)}" for a, b in zip(x, f))
    return "\n".join(lines) + "\n"


def read_density(path):
    lines = Path(path).read_text().splitlines()
    if lines[0].split() != ["x", "fX"]:
        raise ValueError(f"{path}: expected header 'x fX'")
    data = np.array([[float(v) for v in line.split()] for line in lines[1:] if line.strip()])
    return data[:, 0], data[:, 1]


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    version: str
    seed: int | None
    outputs: list
    duration_s: float = 0.0

    def text(self) -> str:
        lines = [
            f"command={self.command}",
            f"argv={shlex.join(self.argv)}",
            f"version={self.version}",
            f"seed={'' if self.seed is None else self.seed}",
            f"outputs={','.join(str(p) for p in self.outputs)}",
            f"duration_s={self.duration_s:.3f}",
        ]
        lines.extend(f"config.{k}={v}" for k, v in sorted(self.config.items()))
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.text())


def read_manifest(path) -> dict:
    out = {}
    for key, value, _, _ in parse_key_values(Path(path).read_text()):
        out[key] = value
    return out


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
