"""Memory-based dependence analysis between statement instances of a SCoP.

A dependence relation lives in the space ``(src iterators, dst iterators,
params)``; iterators are renamed ``<name>.src`` / ``<name>.dst`` so that a
statement can depend on itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .poly import (
    DEFAULT_BOX_CAP, AffineExpr, Constraint, Polyhedron, eq, find_integer_point,
    enumerate_points, ge, is_empty_rational, project_onto,
)
from .scop import READ, WRITE, AccessRelation, Scop, ScopStatement

RAW, WAR, WAW = "RAW", "WAR", "WAW"
LOOP_INDEPENDENT = 0


def dependence_kind(a: str, b: str) -> str | None:
    """Class of a dependence from the source and target access kinds."""
    if a == WRITE and b == READ:
        return RAW
    if a == READ and b == WRITE:
        return WAR
    if a == WRITE and b == WRITE:
        return WAW
    return None


def src_name(it: str) -> str:
    return it + ".src"


def dst_name(it: str) -> str:
    return it + ".dst"


@dataclass(frozen=True)
class Dependence:
    src: int
    dst: int
    kind: str
    array: str
    relation: Polyhedron
    carried_level: int  # LOOP_INDEPENDENT or a loop level >= 1
    src_access: AccessRelation
    dst_access: AccessRelation
    src_iters: tuple[str, ...]
    dst_iters: tuple[str, ...]
    common_levels: int  # loops shared by source and target

    def to_json(self) -> dict:
        space = list(self.relation.space)
        rows = []
        for c in self.relation.constraints:
            e = c.expr.scaled_to_integers()
            rows.append([0 if c.is_eq else 1] + [int(e.coeff(v)) for v in space] + [int(e.constant)])
        return {
            "src": self.src, "dst": self.dst, "kind": self.kind, "array": self.array,
            "carriedLevel": self.carried_level if self.carried_level else "loop-independent",
            "relation": {"space": space, "matrix": rows},
        }


def _renamed(st: ScopStatement, rename) -> tuple[dict, tuple[str, ...]]:
    mapping = {it: rename(it) for it in st.iterators}
    return mapping, tuple(mapping[it] for it in st.iterators)


def _common_levels(a: ScopStatement, b: ScopStatement) -> int:
    """Number of loops enclosing both statements (equal constant prefixes)."""
    n = 0
    for lvl in range(1, min(a.depth, b.depth) + 1):
        pos = 2 * (lvl - 1)
        ca, cb = a.schedule[pos], b.schedule[pos]
        if not (ca.is_constant() and cb.is_constant() and ca == cb):
            break
        n = lvl
    return n


def _nonempty(p: Polyhedron, params: Sequence[str]) -> bool:
    """Rational test, refined by a bounded integer search when it can decide."""
    if is_empty_rational(p):
        return False
    order = [v for v in params if v in p.space] + [v for v in p.space if v not in params]
    return find_integer_point(p.reorder(order)) is not None


def compute_dependences(s: Scop) -> list[Dependence]:
    """All memory-based dependences of ``s``, one per nonempty precedence disjunct."""
    params = tuple(s.params)
    out: list[Dependence] = []
    seen = set()
    for S in s.statements:
        smap, s_it = _renamed(S, src_name)
        s_dom = S.domain.rename(smap)
        s_sched = [r.rename(smap) for r in S.schedule]
        for T in s.statements:
            tmap, t_it = _renamed(T, dst_name)
            t_dom = T.domain.rename(tmap)
            t_sched = [r.rename(tmap) for r in T.schedule]
            space = s_it + t_it + params
            base = Polyhedron(space, s_dom.constraints + t_dom.constraints + s.context.constraints)
            common = _common_levels(S, T)
            for a in S.accesses:
                for b in T.accesses:
                    if a.array != b.array:
                        continue
                    kind = dependence_kind(a.kind, b.kind)
                    if kind is None:
                        continue
                    same = tuple(eq(x.rename(smap), y.rename(tmap))
                                 for x, y in zip(a.subscripts, b.subscripts))
                    cell = base.add(*same)
                    if cell.trivially_empty:
                        continue
                    prefix: list[Constraint] = []
                    for p in range(min(len(s_sched), len(t_sched))):
                        rel = cell.add(*prefix, ge(t_sched[p], s_sched[p] + 1))
                        prefix.append(eq(s_sched[p], t_sched[p]))
                        if rel.trivially_empty or not _nonempty(rel, params):
                            continue
                        level = (p + 1) // 2 if p % 2 == 1 else LOOP_INDEPENDENT
                        key = (S.id, T.id, a.array, kind, level, rel)
                        if key in seen:
                            continue
                        seen.add(key)
                        out.append(Dependence(S.id, T.id, kind, a.array, rel, level, a, b,
                                              s_it, t_it, common))
    return out


def carried_level(d: Dependence, s: Scop) -> int:
    """Outermost common loop level at which the source strictly precedes the
    target, or LOOP_INDEPENDENT."""
    S, T = s.statement(d.src), s.statement(d.dst)
    smap = {it: src_name(it) for it in S.iterators}
    tmap = {it: dst_name(it) for it in T.iterators}
    prefix = []
    for lvl in range(1, d.common_levels + 1):
        ps = S.schedule[2 * lvl - 1].rename(smap)
        pt = T.schedule[2 * lvl - 1].rename(tmap)
        if _nonempty(d.relation.add(*prefix, ge(pt, ps + 1)), s.params):
            return lvl
        prefix.append(eq(ps, pt))
    return LOOP_INDEPENDENT


def deps_to_json(deps: Sequence[Dependence]) -> str:
    return json.dumps([d.to_json() for d in deps], indent=2)


# brute-force ground truth ---------------------------------------------------------

def domain_box(p: Polyhedron) -> dict[str, tuple[int, int]]:
    """Integer bounding box of a bounded polyhedron (params already fixed)."""
    box = {}
    for v in p.space:
        proj = project_onto(p, [v])
        if proj.trivially_empty or any(c.trivial() is False for c in proj.constraints):
            return {x: (0, -1) for x in p.space}
        lo = hi = None
        for c in proj.constraints:
            a = c.expr.coeff(v)
            if not a:
                continue
            bound = -c.expr.constant / a
            if c.is_eq or a > 0:
                b = -(-bound.numerator // bound.denominator)
                lo = b if lo is None else max(lo, b)
            if c.is_eq or a < 0:
                b = bound.numerator // bound.denominator
                hi = b if hi is None else min(hi, b)
        if lo is None or hi is None:
            raise ValueError(f"{v!r} is unbounded in {p}")
        box[v] = (lo, hi)
    return box


def statement_points(st: ScopStatement, param_values: Mapping[str, int],
                     cap: int = DEFAULT_BOX_CAP) -> list[tuple[int, ...]]:
    dom = st.domain.fix({k: v for k, v in param_values.items() if k in st.domain.space})
    if not dom.space:
        return [()] if not dom.trivially_empty else []
    return enumerate_points(dom, domain_box(dom), cap)


def dependence_oracle(s: Scop, param_values: Mapping[str, int], cap: int = DEFAULT_BOX_CAP):
    """Every conflicting ordered pair of instances, found by enumeration.

    Returns a set of ``((src id, src point), (dst id, dst point), array, kind)``.
    """
    instances = []
    for st in s.statements:
        for pt in statement_points(st, param_values, cap):
            instances.append((st.schedule_vector(pt), st, pt))
    instances.sort(key=lambda x: x[0])
    cells: dict = {}
    for order, (_, st, pt) in enumerate(instances):
        env = dict(param_values)
        env.update(zip(st.iterators, pt))
        for acc in st.accesses:
            cells.setdefault((acc.array, acc.cell(env)), []).append((order, (st.id, pt), acc.kind))
    out = set()
    for (array, _), events in cells.items():
        for x in range(len(events)):
            o1, i1, k1 = events[x]
            for y in range(x + 1, len(events)):
                o2, i2, k2 = events[y]
                if o1 == o2:
                    continue
                kind = dependence_kind(k1, k2)
                if kind is not None:
                    out.add((i1, i2, array, kind))
    return out


def dependence_instances(deps: Sequence[Dependence], s: Scop, param_values: Mapping[str, int],
                         cap: int = DEFAULT_BOX_CAP):
    """Instance pairs covered by the dependence relations at fixed parameters,
    in the same shape as :func:`dependence_oracle`."""
    points = {st.id: np.array(statement_points(st, param_values, cap), dtype=np.int64)
              .reshape(-1, st.depth) for st in s.statements}
    out = set()
    for d in deps:
        X, Y = points[d.src], points[d.dst]
        if len(X) == 0 or len(Y) == 0:
            continue
        mask = np.ones((len(X), len(Y)), dtype=bool)
        for c in d.relation.constraints:
            e = c.expr.scaled_to_integers()
            const = int(e.constant) + sum(int(e.coeff(p)) * v for p, v in param_values.items())
            val = np.full((len(X), len(Y)), const, dtype=np.int64)
            xs = np.array([int(e.coeff(v)) for v in d.src_iters], dtype=np.int64)
            ys = np.array([int(e.coeff(v)) for v in d.dst_iters], dtype=np.int64)
            val += (X @ xs)[:, None] + (Y @ ys)[None, :]
            mask &= (val == 0) if c.is_eq else (val >= 0)
        for a, b in zip(*np.nonzero(mask)):
            out.add(((d.src, tuple(map(int, X[a]))), (d.dst, tuple(map(int, Y[b]))), d.array, d.kind))
    return out
