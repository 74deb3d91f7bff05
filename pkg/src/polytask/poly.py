"""Exact affine-set algebra over named integer variables.

Affine forms carry exact rational coefficients; polyhedra are conjunctions
of ``expr >= 0`` / ``expr == 0`` constraints over an ordered variable space.
Projection uses Fourier-Motzkin elimination (equalities are substituted
first), emptiness is decided on the rational relaxation, and a brute-force
enumerator serves as the test oracle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_BOX_CAP = 10**7

GE = ">="
EQ = "=="


class BoxTooLarge(ValueError):
    """Raised when an enumeration box exceeds the configured point cap."""


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


class AffineExpr:
    """``sum(coeff * var) + constant`` with exact rational coefficients."""

    __slots__ = ("_coeffs", "constant", "_hash")

    def __init__(self, coeffs: Mapping[str, object] | None = None, constant=0):
        cleaned = {}
        for k, v in (coeffs or {}).items():
            v = _frac(v)
            if v:
                cleaned[k] = v
        self._coeffs = cleaned
        self.constant = _frac(constant)
        self._hash = None

    @classmethod
    def var(cls, name: str, coeff=1) -> "AffineExpr":
        return cls({name: coeff})

    @classmethod
    def const(cls, value) -> "AffineExpr":
        return cls({}, value)

    @property
    def coeffs(self) -> dict[str, Fraction]:
        return dict(self._coeffs)

    def coeff(self, name: str) -> Fraction:
        return self._coeffs.get(name, Fraction(0))

    def variables(self) -> set[str]:
        return set(self._coeffs)

    def is_constant(self) -> bool:
        return not self._coeffs

    def __add__(self, other) -> "AffineExpr":
        other = _lift(other)
        coeffs = dict(self._coeffs)
        for k, v in other._coeffs.items():
            coeffs[k] = coeffs.get(k, 0) + v
        return AffineExpr(coeffs, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr({k: -v for k, v in self._coeffs.items()}, -self.constant)

    def __sub__(self, other) -> "AffineExpr":
        return self + (-_lift(other))

    def __rsub__(self, other) -> "AffineExpr":
        return _lift(other) - self

    def __mul__(self, k) -> "AffineExpr":
        if isinstance(k, AffineExpr):
            if k.is_constant():
                k = k.constant
            elif self.is_constant():
                return k * self.constant
            else:
                raise ValueError("product of two non-constant affine forms")
        k = _frac(k)
        return AffineExpr({n: v * k for n, v in self._coeffs.items()}, self.constant * k)

    __rmul__ = __mul__

    def substitute(self, name: str, repl: "AffineExpr") -> "AffineExpr":
        c = self._coeffs.get(name)
        if not c:
            return self
        rest = AffineExpr({k: v for k, v in self._coeffs.items() if k != name}, self.constant)
        return rest + repl * c

    def rename(self, mapping: Mapping[str, str]) -> "AffineExpr":
        return AffineExpr({mapping.get(k, k): v for k, v in self._coeffs.items()}, self.constant)

    def evaluate(self, values: Mapping[str, object]) -> Fraction:
        total = self.constant
        for k, v in self._coeffs.items():
            total += v * values[k]
        return total

    def scaled_to_integers(self) -> "AffineExpr":
        """Positive rescaling with coprime integer coefficients and constant."""
        vals = list(self._coeffs.values()) + [self.constant]
        den = 1
        for v in vals:
            den = den * v.denominator // math.gcd(den, v.denominator)
        ints = [int(v * den) for v in vals]
        g = 0
        for v in ints:
            g = math.gcd(g, v)
        if g == 0:
            return self
        return self * Fraction(den, g)

    def _key(self):
        return (tuple(sorted(self._coeffs.items())), self.constant)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AffineExpr):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._key())
        return self._hash

    def format(self, order: Sequence[str] | None = None) -> str:
        names = list(order) if order is not None else sorted(self._coeffs)
        names += sorted(set(self._coeffs) - set(names))
        parts = []
        for n in names:
            c = self._coeffs.get(n)
            if not c:
                continue
            if c == 1:
                term = n
            elif c == -1:
                term = "-" + n
            else:
                term = f"{c}*{n}"
            parts.append(term)
        if self.constant or not parts:
            parts.append(str(self.constant))
        s = " + ".join(parts)
        return s.replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"AffineExpr({self.format()})"


def _lift(v) -> AffineExpr:
    if isinstance(v, AffineExpr):
        return v
    return AffineExpr.const(v)


@dataclass(frozen=True)
class Constraint:
    """``expr >= 0`` (kind GE) or ``expr == 0`` (kind EQ)."""

    expr: AffineExpr
    kind: str = GE

    @property
    def is_eq(self) -> bool:
        return self.kind == EQ

    def holds(self, values: Mapping[str, object]) -> bool:
        v = self.expr.evaluate(values)
        return v == 0 if self.is_eq else v >= 0

    def normalized(self) -> "Constraint":
        e = self.expr.scaled_to_integers()
        if self.is_eq:
            # canonical sign: first nonzero coefficient positive
            for n in sorted(e.variables()):
                if e.coeff(n) < 0:
                    e = -e
                break
            else:
                if e.constant < 0:
                    e = -e
        return Constraint(e, self.kind)

    def trivial(self) -> bool | None:
        """True if tautological, False if contradictory, None if it has variables."""
        if not self.expr.is_constant():
            return None
        c = self.expr.constant
        return c == 0 if self.is_eq else c >= 0

    def rename(self, mapping: Mapping[str, str]) -> "Constraint":
        return Constraint(self.expr.rename(mapping), self.kind)

    def __str__(self) -> str:
        return f"{self.expr.format()} {self.kind} 0"


def ge(lhs, rhs=0) -> Constraint:
    """``lhs >= rhs``."""
    return Constraint(_lift(lhs) - _lift(rhs), GE)


def le(lhs, rhs=0) -> Constraint:
    return Constraint(_lift(rhs) - _lift(lhs), GE)


def eq(lhs, rhs=0) -> Constraint:
    return Constraint(_lift(lhs) - _lift(rhs), EQ)


_FALSE = Constraint(AffineExpr.const(-1), GE)


def _simplify(constraints: Iterable[Constraint]) -> tuple[Constraint, ...]:
    """Normalize, drop tautologies and syntactic duplicates, keep the tightest
    constant among inequalities sharing a coefficient vector."""
    best: dict = {}
    eqs: dict = {}
    for c in constraints:
        c = c.normalized()
        t = c.trivial()
        if t is True:
            continue
        if t is False:
            return (_FALSE,)
        key = tuple(sorted(c.expr.coeffs.items()))
        if c.is_eq:
            prev = eqs.get(key)
            if prev is not None and prev.expr.constant != c.expr.constant:
                return (_FALSE,)
            eqs[key] = c
        else:
            prev = best.get(key)
            if prev is None or c.expr.constant < prev.expr.constant:
                best[key] = c
    out = list(eqs.values()) + list(best.values())
    # opposite inequalities a >= 0 and -a + k >= 0 with k < 0 are contradictory
    for key, c in best.items():
        neg = tuple((n, -v) for n, v in key)
        other = best.get(tuple(sorted(neg)))
        if other is not None and c.expr.constant + other.expr.constant < 0:
            return (_FALSE,)
    return tuple(out)


@dataclass(frozen=True)
class Polyhedron:
    """Conjunction of affine constraints over an ordered variable space."""

    space: tuple[str, ...]
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "space", tuple(self.space))
        known = set(self.space)
        for c in self.constraints:
            extra = c.expr.variables() - known
            if extra:
                raise ValueError(f"constraint {c} uses variables outside space: {sorted(extra)}")
        object.__setattr__(self, "constraints", _simplify(self.constraints))

    @classmethod
    def universe(cls, space: Sequence[str]) -> "Polyhedron":
        return cls(tuple(space), ())

    @property
    def trivially_empty(self) -> bool:
        return self.constraints == (_FALSE,)

    def add(self, *constraints: Constraint) -> "Polyhedron":
        return Polyhedron(self.space, self.constraints + tuple(constraints))

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        space = list(self.space) + [v for v in other.space if v not in self.space]
        return Polyhedron(tuple(space), self.constraints + other.constraints)

    def extend(self, names: Sequence[str]) -> "Polyhedron":
        space = list(self.space) + [n for n in names if n not in self.space]
        return Polyhedron(tuple(space), self.constraints)

    def rename(self, mapping: Mapping[str, str]) -> "Polyhedron":
        return Polyhedron(tuple(mapping.get(v, v) for v in self.space),
                          tuple(c.rename(mapping) for c in self.constraints))

    def reorder(self, space: Sequence[str]) -> "Polyhedron":
        if set(space) != set(self.space):
            raise ValueError("reorder must keep the same variables")
        return Polyhedron(tuple(space), self.constraints)

    def fix(self, values: Mapping[str, int]) -> "Polyhedron":
        """Substitute integer values for some variables, removing them from the space."""
        cons = []
        for c in self.constraints:
            e = c.expr
            for k, v in values.items():
                e = e.substitute(k, AffineExpr.const(v))
            cons.append(Constraint(e, c.kind))
        return Polyhedron(tuple(v for v in self.space if v not in values), tuple(cons))

    def contains(self, point: Mapping[str, int] | Sequence[int]) -> bool:
        if not isinstance(point, Mapping):
            point = dict(zip(self.space, point))
        return all(c.holds(point) for c in self.constraints)

    def __str__(self) -> str:
        body = ", ".join(str(c) for c in self.constraints) or "true"
        return f"[{', '.join(self.space)}] {{ {body} }}"


def fm_eliminate(p: Polyhedron, v: str) -> Polyhedron:
    """Rational projection of ``p`` onto ``space \\ {v}``."""
    if v not in p.space:
        raise ValueError(f"{v!r} not in space {p.space}")
    space = tuple(x for x in p.space if x != v)
    if p.trivially_empty:
        return Polyhedron(space, (_FALSE,))
    cons = p.constraints
    for c in cons:
        if c.is_eq and c.expr.coeff(v):
            a = c.expr.coeff(v)
            repl = (AffineExpr({k: x for k, x in c.expr.coeffs.items() if k != v}, c.expr.constant)
                    * Fraction(-1) * (1 / a))
            out = [Constraint(o.expr.substitute(v, repl), o.kind) for o in cons if o is not c]
            return Polyhedron(space, tuple(out))
    pos, neg, rest = [], [], []
    for c in cons:
        a = c.expr.coeff(v)
        if a > 0:
            pos.append(c)
        elif a < 0:
            neg.append(c)
        else:
            rest.append(c)
    for cp in pos:
        ap = cp.expr.coeff(v)
        for cn in neg:
            an = -cn.expr.coeff(v)
            combo = cp.expr * an + cn.expr * ap
            rest.append(Constraint(combo, GE))
    return Polyhedron(space, tuple(rest))


def project_onto(p: Polyhedron, keep: Sequence[str]) -> Polyhedron:
    """Eliminate every variable not in ``keep`` (innermost first)."""
    cur = p
    for v in reversed(p.space):
        if v not in keep:
            cur = fm_eliminate(cur, v)
    return cur.reorder([v for v in p.space if v in keep]) if set(keep) <= set(p.space) else cur


def is_empty_rational(p: Polyhedron) -> bool:
    """True iff ``p`` has no rational point."""
    cur = p
    for v in reversed(p.space):
        if cur.trivially_empty:
            return True
        cur = fm_eliminate(cur, v)
    return cur.trivially_empty or any(c.trivial() is False for c in cur.constraints)


def _bounds_for(cons: Iterable[Constraint], v: str, values: Mapping[str, int]):
    lo, hi = None, None
    for c in cons:
        a = c.expr.coeff(v)
        if not a:
            continue
        rest = c.expr.constant
        for k, x in c.expr.coeffs.items():
            if k != v:
                rest += x * values[k]
        bound = -rest / a
        if c.is_eq:
            if bound.denominator != 1:
                return 1, 0
            b = int(bound)
            lo = b if lo is None else max(lo, b)
            hi = b if hi is None else min(hi, b)
        elif a > 0:
            b = math.ceil(bound)
            lo = b if lo is None else max(lo, b)
        else:
            b = math.floor(bound)
            hi = b if hi is None else min(hi, b)
    return lo, hi


def find_integer_point(p: Polyhedron, limit: int = 200_000) -> tuple[int, ...] | None | bool:
    """Search for an integer point of ``p``.

    Returns the point, ``None`` when the polyhedron provably has no integer
    point, or ``True`` when the search could not decide (some variable is
    unbounded or the node limit was hit) and the caller must stay conservative.
    """
    if is_empty_rational(p):
        return None
    space = p.space
    # prefix projections: proj[k] ranges over space[:k+1]
    proj = [None] * len(space)
    cur = p
    for k in range(len(space) - 1, -1, -1):
        proj[k] = cur
        cur = fm_eliminate(cur, space[k])
    level_cons = []
    for k in range(len(space)):
        level_cons.append([c for c in proj[k].constraints if c.expr.coeff(space[k])])
    budget = [limit]

    def dfs(k, values):
        if k == len(space):
            return tuple(values[v] for v in space)
        lo, hi = _bounds_for(level_cons[k], space[k], values)
        if lo is None or hi is None:
            return True
        for x in range(lo, hi + 1):
            budget[0] -= 1
            if budget[0] < 0:
                return True
            values[space[k]] = x
            r = dfs(k + 1, values)
            if r is not None:
                return r
        values.pop(space[k], None)
        return None

    return dfs(0, {})


def is_empty_integer(p: Polyhedron) -> bool:
    """Conservative integer emptiness: True only when proven empty."""
    return find_integer_point(p) is None


def enumerate_points(p: Polyhedron, box: Mapping[str, tuple[int, int]],
                     cap: int = DEFAULT_BOX_CAP) -> list[tuple[int, ...]]:
    """Brute-force integer points of ``p`` inside ``box`` (inclusive bounds),
    in lexicographic order of ``p.space``."""
    ranges = []
    for v in p.space:
        if v not in box:
            raise ValueError(f"box has no bounds for {v!r}")
        lo, hi = box[v]
        ranges.append((int(lo), int(hi)))
    volume = 1
    for lo, hi in ranges:
        volume *= max(0, hi - lo + 1)
    if volume > cap:
        raise BoxTooLarge(f"box volume {volume} exceeds cap {cap}")
    if volume == 0 or p.trivially_empty:
        return []
    if not p.space:
        return [()] if all(c.trivial() is not False for c in p.constraints) else []
    rows = []
    for c in p.constraints:
        e = c.expr.scaled_to_integers()
        rows.append(([int(e.coeff(v)) for v in p.space], int(e.constant), c.is_eq))
    first_lo, first_hi = ranges[0]
    inner = ranges[1:]
    if inner:
        grids = np.meshgrid(*[np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in inner],
                            indexing="ij")
        inner_pts = np.stack([g.ravel() for g in grids], axis=1)
    else:
        inner_pts = np.zeros((1, 0), dtype=np.int64)
    out: list[tuple[int, ...]] = []
    for x0 in range(first_lo, first_hi + 1):
        mask = np.ones(len(inner_pts), dtype=bool)
        for coeffs, const, is_eq in rows:
            val = const + coeffs[0] * x0 + (inner_pts @ np.array(coeffs[1:], dtype=np.int64)
                                            if inner else 0)
            mask &= (val == 0) if is_eq else (val >= 0)
        for row in inner_pts[mask]:
            out.append((x0, *map(int, row)))
    return out


def bounding_box(points: Iterable[Sequence[int]], space: Sequence[str], pad: int = 0):
    lo = {v: None for v in space}
    hi = {v: None for v in space}
    for pt in points:
        for v, x in zip(space, pt):
            lo[v] = x if lo[v] is None else min(lo[v], x)
            hi[v] = x if hi[v] is None else max(hi[v], x)
    return {v: (lo[v] - pad, hi[v] + pad) for v in space if lo[v] is not None}


__all__ = [
    "AffineExpr", "Constraint", "Polyhedron", "BoxTooLarge", "GE", "EQ",
    "ge", "le", "eq", "fm_eliminate", "project_onto", "is_empty_rational",
    "is_empty_integer", "find_integer_point", "enumerate_points", "bounding_box",
    "DEFAULT_BOX_CAP",
]
