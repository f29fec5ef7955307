"""Quadratically constrained model container.

Variables are referenced by integer index. Expressions are kept in a
canonical form: linear terms keyed by variable index, bilinear terms keyed
by an ordered pair ``(a, b)`` with ``a <= b`` (``a == b`` is a square).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

CONTINUOUS = "continuous"
BINARY = "binary"
VAR_KINDS = (CONTINUOUS, BINARY)
SENSES = ("<=", ">=", "==")


class ModelError(ValueError):
    pass


class BoundOrder(ModelError):
    pass


class UnknownVariable(ModelError):
    pass


class DuplicateLabel(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class ModelFrozen(ModelError):
    pass


@dataclass(frozen=True)
class Variable:
    index: int
    lower: float
    upper: float
    kind: str = CONTINUOUS
    name: str = ""

    @property
    def is_binary(self) -> bool:
        return self.kind == BINARY


@dataclass(frozen=True)
class BilinearTerm:
    coef: float
    a: int
    b: int

    def __post_init__(self):
        if self.a > self.b:
            raise ModelError("bilinear term requires a <= b")


class LinearExpr:
    """constant + sum coef_i * x_i"""

    __slots__ = ("constant", "terms")

    def __init__(self, terms: Mapping[int, float] | None = None, constant: float = 0.0):
        self.constant = float(constant)
        self.terms: dict[int, float] = {}
        if terms:
            for i, c in terms.items():
                self.terms[int(i)] = self.terms.get(int(i), 0.0) + float(c)

    def canonical(self) -> "LinearExpr":
        out = LinearExpr(constant=self.constant)
        out.terms = {i: c for i, c in sorted(self.terms.items()) if c != 0.0}
        return out

    def variables(self) -> set[int]:
        return set(self.terms)

    def __eq__(self, other):
        if not isinstance(other, LinearExpr):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return a.constant == b.constant and a.terms == b.terms

    def __repr__(self):
        return f"LinearExpr({self.canonical().terms}, constant={self.constant})"


class QuadExpr:
    """Linear part plus bilinear terms; supports +, -, scalar * and a product of
    two linear expressions."""

    __slots__ = ("linear", "quad")

    def __init__(self, linear: LinearExpr | Mapping[int, float] | None = None,
                 quad: Mapping[tuple[int, int], float] | None = None,
                 constant: float = 0.0):
        if isinstance(linear, LinearExpr):
            self.linear = LinearExpr(linear.terms, linear.constant + constant)
        else:
            self.linear = LinearExpr(linear, constant)
        self.quad: dict[tuple[int, int], float] = {}
        if quad:
            for (a, b), c in quad.items():
                key = (int(a), int(b)) if a <= b else (int(b), int(a))
                self.quad[key] = self.quad.get(key, 0.0) + float(c)

    # construction helpers
    @classmethod
    def var(cls, i: int, coef: float = 1.0) -> "QuadExpr":
        return cls({i: coef})

    @classmethod
    def const(cls, value: float) -> "QuadExpr":
        return cls(constant=value)

    @classmethod
    def from_terms(cls, terms: Iterable[BilinearTerm], linear: LinearExpr | None = None) -> "QuadExpr":
        return cls(linear, {(t.a, t.b): t.coef for t in terms})

    @property
    def constant(self) -> float:
        return self.linear.constant

    def copy(self) -> "QuadExpr":
        return QuadExpr(self.linear, dict(self.quad))

    def canonical(self) -> "QuadExpr":
        out = QuadExpr(self.linear.canonical())
        out.quad = {k: c for k, c in sorted(self.quad.items()) if c != 0.0}
        return out

    def bilinear_terms(self) -> list[BilinearTerm]:
        return [BilinearTerm(c, a, b) for (a, b), c in sorted(self.quad.items()) if c != 0.0]

    def is_linear(self) -> bool:
        return not any(c != 0.0 for c in self.quad.values())

    def variables(self) -> set[int]:
        out = self.linear.variables()
        for a, b in self.quad:
            out.add(a)
            out.add(b)
        return out

    # arithmetic
    @staticmethod
    def _coerce(other) -> "QuadExpr":
        if isinstance(other, QuadExpr):
            return other
        if isinstance(other, LinearExpr):
            return QuadExpr(other)
        if isinstance(other, (int, float)):
            return QuadExpr(constant=float(other))
        raise TypeError(f"cannot combine QuadExpr with {type(other).__name__}")

    def _iadd(self, other, scale=1.0) -> "QuadExpr":
        other = self._coerce(other)
        self.linear.constant += scale * other.linear.constant
        for i, c in other.linear.terms.items():
            self.linear.terms[i] = self.linear.terms.get(i, 0.0) + scale * c
        for k, c in other.quad.items():
            self.quad[k] = self.quad.get(k, 0.0) + scale * c
        return self

    def __add__(self, other):
        return self.copy()._iadd(other)

    __radd__ = __add__

    def __iadd__(self, other):
        return self._iadd(other)

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return self._coerce(other).copy()._iadd(self, -1.0)

    def __isub__(self, other):
        return self._iadd(other, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            s = float(other)
            out = QuadExpr(constant=self.linear.constant * s)
            out.linear.terms = {i: c * s for i, c in self.linear.terms.items()}
            out.quad = {k: c * s for k, c in self.quad.items()}
            return out
        other = self._coerce(other)
        if not (self.is_linear() and other.is_linear()):
            raise ModelError("product would exceed degree two")
        out = QuadExpr(constant=self.constant * other.constant)
        for i, c in self.linear.terms.items():
            out.linear.terms[i] = out.linear.terms.get(i, 0.0) + c * other.constant
        for i, c in other.linear.terms.items():
            out.linear.terms[i] = out.linear.terms.get(i, 0.0) + c * self.constant
        for i, ci in self.linear.terms.items():
            for j, cj in other.linear.terms.items():
                key = (i, j) if i <= j else (j, i)
                out.quad[key] = out.quad.get(key, 0.0) + ci * cj
        return out

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, QuadExpr):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return a.linear == b.linear and a.quad == b.quad

    def __repr__(self):
        c = self.canonical()
        return f"QuadExpr(linear={c.linear.terms}, quad={c.quad}, constant={c.constant})"

    def evaluate(self, point) -> float:
        """Constant, then linear terms by ascending index, then bilinear terms
        by ascending (a, b)."""
        total = self.linear.constant
        for i in sorted(self.linear.terms):
            total += self.linear.terms[i] * point[i]
        for a, b in sorted(self.quad):
            total += self.quad[(a, b)] * point[a] * point[b]
        return total


def canonicalize(expr: QuadExpr | LinearExpr):
    return expr.canonical()


def quicksum(exprs: Iterable) -> QuadExpr:
    out = QuadExpr()
    for e in exprs:
        out._iadd(e)
    return out


@dataclass
class Constraint:
    body: QuadExpr
    sense: str
    rhs: float
    label: str

    def residual(self, point) -> float:
        """Amount of violation (0 when satisfied)."""
        v = self.body.evaluate(point) - self.rhs
        if self.sense == "<=":
            return max(v, 0.0)
        if self.sense == ">=":
            return max(-v, 0.0)
        return abs(v)

    @property
    def is_bilinear(self) -> bool:
        return not self.body.is_linear()


class QcqpModel:
    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective = QuadExpr()
        self.sense = "min"
        self._labels: dict[str, int] = {}
        self._frozen = False

    # construction
    def _check_mutable(self):
        if self._frozen:
            raise ModelFrozen("model has been handed to a solver and is read-only")

    def add_variable(self, lower: float = 0.0, upper: float = math.inf,
                     kind: str = CONTINUOUS, name: str = "") -> int:
        self._check_mutable()
        if kind not in VAR_KINDS:
            raise ModelError(f"unknown variable kind {kind!r}")
        lower, upper = float(lower), float(upper)
        if kind == BINARY:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise BoundOrder(f"variable {name or len(self.variables)}: lower {lower} > upper {upper}")
        idx = len(self.variables)
        self.variables.append(Variable(idx, lower, upper, kind, name or f"x{idx}"))
        return idx

    def set_bounds(self, index: int, lower: float, upper: float):
        self._check_mutable()
        self._check_index(index)
        if lower > upper:
            raise BoundOrder(f"variable {index}: lower {lower} > upper {upper}")
        v = self.variables[index]
        self.variables[index] = Variable(index, float(lower), float(upper), v.kind, v.name)

    def x(self, index: int, coef: float = 1.0) -> QuadExpr:
        self._check_index(index)
        return QuadExpr.var(index, coef)

    def _check_index(self, i: int):
        if not (0 <= i < len(self.variables)):
            raise UnknownVariable(f"variable index {i} not in model ({len(self.variables)} variables)")

    def _check_expr(self, expr: QuadExpr):
        for i in expr.variables():
            self._check_index(i)

    def add_constraint(self, body: QuadExpr, sense: str, rhs: float = 0.0, label: str | None = None) -> int:
        self._check_mutable()
        body = QuadExpr._coerce(body)
        if sense not in SENSES:
            raise ModelError(f"unknown constraint sense {sense!r}")
        self._check_expr(body)
        label = label or f"c{len(self.constraints)}"
        if label in self._labels:
            raise DuplicateLabel(label)
        # move the constant to the right-hand side
        body = body.canonical()
        rhs = float(rhs) - body.linear.constant
        body.linear.constant = 0.0
        self._labels[label] = len(self.constraints)
        self.constraints.append(Constraint(body, sense, rhs, label))
        return len(self.constraints) - 1

    def set_objective(self, expr: QuadExpr, sense: str = "min"):
        self._check_mutable()
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be 'min' or 'max', got {sense!r}")
        expr = QuadExpr._coerce(expr)
        self._check_expr(expr)
        self.objective = expr.canonical()
        self.sense = sense

    def freeze(self):
        self._frozen = True

    @property
    def frozen(self) -> bool:
        return self._frozen

    # queries
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def constraint(self, label: str) -> Constraint:
        return self.constraints[self._labels[label]]

    def has_constraint(self, label: str) -> bool:
        return label in self._labels

    def bilinear_rows(self) -> list[Constraint]:
        return [c for c in self.constraints if c.is_bilinear]

    def evaluate(self, point) -> tuple[float, list[float]]:
        """Objective value and per-constraint violation at ``point``."""
        if len(point) != len(self.variables):
            raise DimensionMismatch(f"point has {len(point)} entries, model has {len(self.variables)} variables")
        return self.objective.evaluate(point), [c.residual(point) for c in self.constraints]

    def bound_violations(self, point) -> dict[int, float]:
        if len(point) != len(self.variables):
            raise DimensionMismatch(f"point has {len(point)} entries, model has {len(self.variables)} variables")
        out = {}
        for v in self.variables:
            x = point[v.index]
            viol = max(v.lower - x, x - v.upper, 0.0)
            if v.is_binary:
                viol = max(viol, min(abs(x), abs(1.0 - x)))
            if viol > 0.0:
                out[v.index] = viol
        return out

    def is_feasible(self, point, tol: float = 1e-6) -> bool:
        _, res = self.evaluate(point)
        scale = [tol * (1.0 + abs(c.rhs)) for c in self.constraints]
        if any(r > s for r, s in zip(res, scale)):
            return False
        return all(v <= tol for v in self.bound_violations(point).values())

    # serialization
    def to_dict(self) -> dict:
        def enc(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")

        def expr(e: QuadExpr):
            e = e.canonical()
            return {"constant": e.constant,
                    "linear": [[i, c] for i, c in e.linear.terms.items()],
                    "bilinear": [[a, b, c] for (a, b), c in e.quad.items()]}

        return {
            "name": self.name,
            "sense": self.sense,
            "variables": [{"lower": enc(v.lower), "upper": enc(v.upper), "kind": v.kind, "name": v.name}
                          for v in self.variables],
            "objective": expr(self.objective),
            "constraints": [{"label": c.label, "sense": c.sense, "rhs": c.rhs, "body": expr(c.body)}
                            for c in self.constraints],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QcqpModel":
        def dec(x):
            return float(x)

        def expr(d):
            return QuadExpr({int(i): c for i, c in d["linear"]},
                            {(int(a), int(b)): c for a, b, c in d["bilinear"]},
                            constant=d.get("constant", 0.0))

        m = cls(data.get("name", "model"))
        for v in data["variables"]:
            m.add_variable(dec(v["lower"]), dec(v["upper"]), v["kind"], v.get("name", ""))
        for c in data["constraints"]:
            m.add_constraint(expr(c["body"]), c["sense"], c["rhs"], c["label"])
        m.set_objective(expr(data["objective"]), data["sense"])
        return m

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QcqpModel":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"QcqpModel({self.name!r}, vars={len(self.variables)}, "
                f"rows={len(self.constraints)}, sense={self.sense})")
