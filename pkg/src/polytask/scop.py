"""Static control parts: extraction of affine loop nests into a polyhedral IR."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .dsl.nodes import (
    ArrayRef, Assign, BinOp, CallStmt, ForLoop, Func, IntLit, Neg, Program, Var,
    walk_expr,
)
from .poly import AffineExpr, Constraint, Polyhedron, ge

READ, WRITE = "READ", "WRITE"


@dataclass(frozen=True)
class AccessRelation:
    array: str
    subscripts: tuple[AffineExpr, ...]
    kind: str  # READ | WRITE

    def cell(self, values) -> tuple[int, ...]:
        out = []
        for s in self.subscripts:
            v = s.evaluate(values)
            out.append(int(v) if v.denominator == 1 else v)
        return tuple(out)


@dataclass(frozen=True)
class ScopStatement:
    id: int
    iterators: tuple[str, ...]
    domain: Polyhedron  # space = iterators + params
    schedule: tuple[AffineExpr, ...]  # scattering rows over iterators
    accesses: tuple[AccessRelation, ...]
    body: Union[Assign, CallStmt]
    tile_sizes: tuple[int, ...] = ()  # non-empty for tiled statements: one per tile iterator

    @property
    def depth(self) -> int:
        return len(self.iterators)

    @property
    def reads(self) -> tuple[AccessRelation, ...]:
        return tuple(a for a in self.accesses if a.kind == READ)

    @property
    def writes(self) -> tuple[AccessRelation, ...]:
        return tuple(a for a in self.accesses if a.kind == WRITE)

    @property
    def name(self) -> str:
        return f"S{self.id}"

    def schedule_vector(self, point: Sequence[int]) -> tuple:
        env = dict(zip(self.iterators, point))
        return tuple(row.evaluate(env) for row in self.schedule)


@dataclass(frozen=True)
class Scop:
    params: tuple[str, ...]
    context: Polyhedron
    statements: tuple[ScopStatement, ...]
    arrays: tuple[tuple[str, int], ...]  # (name, rank) for every array accessed

    def statement(self, sid: int) -> ScopStatement:
        for s in self.statements:
            if s.id == sid:
                return s
        raise KeyError(sid)

    @property
    def max_depth(self) -> int:
        return max((s.depth for s in self.statements), default=0)


@dataclass
class ExtractionResult:
    """Top-level statements partitioned into SCoPs and residual code.

    ``items`` keeps source order: ``("scop", Scop, index)`` or
    ``("residual", stmt, index)`` where ``index`` is the position in the
    program body.
    """
    items: list = field(default_factory=list)

    @property
    def scops(self) -> list[tuple[Scop, int]]:
        return [(x[1], x[2]) for x in self.items if x[0] == "scop"]

    @property
    def residual(self) -> list:
        return [(x[1], x[2]) for x in self.items if x[0] == "residual"]


# affine recognition ---------------------------------------------------------------

def to_affine(e, allowed: set[str]) -> Optional[AffineExpr]:
    """AffineExpr for an integer expression over ``allowed`` names, else None."""
    if isinstance(e, IntLit):
        return AffineExpr.const(e.value)
    if isinstance(e, Var):
        return AffineExpr.var(e.name) if e.name in allowed else None
    if isinstance(e, Neg):
        inner = to_affine(e.operand, allowed)
        return None if inner is None else -inner
    if isinstance(e, BinOp) and e.op in ("+", "-", "*"):
        a = to_affine(e.left, allowed)
        b = to_affine(e.right, allowed)
        if a is None or b is None:
            return None
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if a.is_constant() or b.is_constant():
            return a * b
        return None
    return None


def _int_const(e) -> Optional[int]:
    a = to_affine(e, set())
    if a is None or a.constant.denominator != 1:
        return None
    return int(a.constant)


def _split_offset(e):
    """``f(...) + k`` / ``f(...) - k`` -> (f(...), k); otherwise (e, 0)."""
    if isinstance(e, BinOp) and e.op in ("+", "-"):
        k = _int_const(e.right)
        if k is not None and isinstance(e.left, Func):
            return e.left, (k if e.op == "+" else -k)
        k = _int_const(e.left)
        if k is not None and e.op == "+" and isinstance(e.right, Func):
            return e.right, k
    return e, 0


def lower_bound_constraints(e, x: str, allowed: set[str]) -> Optional[list[Constraint]]:
    """Constraints equivalent to ``x >= e`` for integer x, or None if not affine."""
    xv = AffineExpr.var(x)
    a = to_affine(e, allowed)
    if a is not None:
        return [ge(xv, a)]
    f, k = _split_offset(e)
    if isinstance(f, Func):
        if f.name == "max" and k == 0:
            out = []
            for arg in f.args:
                sub = lower_bound_constraints(arg, x, allowed)
                if sub is None:
                    return None
                out.extend(sub)
            return out
        if f.name == "ceild":
            num = to_affine(f.args[0], allowed)
            den = _int_const(f.args[1])
            if num is None or not den or den <= 0:
                return None
            return [ge((xv - k) * den, num)]
    return None


def upper_bound_constraints(e, x: str, allowed: set[str]) -> Optional[list[Constraint]]:
    """Constraints equivalent to ``x < e`` for integer x, or None if not affine."""
    xv = AffineExpr.var(x)
    a = to_affine(e, allowed)
    if a is not None:
        return [ge(a - 1, xv)]
    f, k = _split_offset(e)
    if isinstance(f, Func):
        if f.name == "min" and k == 0:
            out = []
            for arg in f.args:
                sub = upper_bound_constraints(arg, x, allowed)
                if sub is None:
                    return None
                out.extend(sub)
            return out
        if f.name == "floord":
            num = to_affine(f.args[0], allowed)
            den = _int_const(f.args[1])
            if num is None or not den or den <= 0:
                return None
            return [ge(num, (xv - k + 1) * den)]
    return None


def statement_accesses(s, allowed: set[str], kernels=None) -> Optional[tuple[AccessRelation, ...]]:
    """Access relations of an Assign/CallStmt, or None if a subscript is not affine."""
    if kernels is None:
        from .kernels import KERNELS
        kernels = KERNELS
    reads: list = []
    writes: list = []

    def add(ref: ArrayRef, kind, into):
        subs = []
        for idx in ref.indices:
            a = to_affine(idx, allowed)
            if a is None:
                return False
            subs.append(a)
        into.append(AccessRelation(ref.array, tuple(subs), kind))
        return True

    def add_reads(expr):
        for sub in walk_expr(expr):
            if isinstance(sub, ArrayRef) and not add(sub, READ, reads):
                return False
        return True

    if isinstance(s, Assign):
        if s.op != "=" and not add(s.target, READ, reads):
            return None
        if not add_reads(s.value):
            return None
        for idx in s.target.indices:
            if not add_reads(idx):
                return None
        if not add(s.target, WRITE, writes):
            return None
    elif isinstance(s, CallStmt):
        dirs = kernels[s.func].directions
        for arg, d in zip(s.args, dirs):
            if d == "out":
                for idx in arg.indices:
                    if not add_reads(idx):
                        return None
                if not add(arg, WRITE, writes):
                    return None
            else:
                if not add_reads(arg):
                    return None
                if d == "inout" and not add(arg, WRITE, writes):
                    return None
    else:
        return None
    return tuple(reads + writes)


def _scalar_refs_ok(s, allowed: set[str]) -> bool:
    """Non-subscript Vars in statement expressions must be iterators or params."""
    exprs = []
    if isinstance(s, Assign):
        exprs = [s.target, s.value]
    elif isinstance(s, CallStmt):
        exprs = list(s.args)
    for e in exprs:
        for sub in walk_expr(e):
            if isinstance(sub, Var) and sub.name not in allowed:
                return False
    return True


def extract_nest(loop: ForLoop, params: Sequence[str], first_id: int,
                 kernels=None) -> Optional[Scop]:
    """Scop for a top-level loop whose whole subtree is affine, else None."""
    params = tuple(params)
    statements: list[ScopStatement] = []
    used_arrays: dict[str, int] = {}

    def visit(stmt, iters, cons, sched, pos) -> bool:
        if isinstance(stmt, ForLoop):
            allowed = set(iters) | set(params)
            lo = lower_bound_constraints(stmt.lower, stmt.iterator, allowed)
            hi = upper_bound_constraints(stmt.upper, stmt.iterator, allowed)
            if lo is None or hi is None:
                return False
            new_iters = iters + [stmt.iterator]
            new_cons = cons + lo + hi
            new_sched = sched + [AffineExpr.const(pos), AffineExpr.var(stmt.iterator)]
            for k, child in enumerate(stmt.body):
                if not visit(child, new_iters, new_cons, new_sched, k):
                    return False
            return True
        if isinstance(stmt, (Assign, CallStmt)):
            allowed = set(iters) | set(params)
            acc = statement_accesses(stmt, allowed, kernels)
            if acc is None or not _scalar_refs_ok(stmt, allowed):
                return False
            for a in acc:
                used_arrays[a.array] = len(a.subscripts)
            domain = Polyhedron(tuple(iters) + params, tuple(cons))
            statements.append(ScopStatement(
                first_id + len(statements), tuple(iters), domain,
                tuple(sched + [AffineExpr.const(pos)]), acc, stmt))
            return True
        return False

    if not visit(loop, [], [], [], 0):
        return None
    if not statements:
        return None
    return Scop(params, Polyhedron.universe(params), tuple(statements),
                tuple(sorted(used_arrays.items())))


def extract_scops(p: Program, kernels=None) -> ExtractionResult:
    """Split the program body into affine SCoPs and residual statements.

    Statement ids are numbered from 1 across the whole program in source
    order, counting only statements inside SCoPs.
    """
    res = ExtractionResult()
    next_id = 1
    for index, stmt in enumerate(p.body):
        scop = None
        if isinstance(stmt, ForLoop):
            scop = extract_nest(stmt, p.param_names, next_id, kernels)
        if scop is not None:
            next_id += len(scop.statements)
            res.items.append(("scop", scop, index))
        else:
            res.items.append(("residual", stmt, index))
    return res


def fix_params(scop: Scop, values: dict[str, int]) -> Scop:
    """Restrict the scop's context to fixed parameter values."""
    from .poly import eq
    cons = tuple(eq(AffineExpr.var(k), v) for k, v in values.items() if k in scop.params)
    return Scop(scop.params, scop.context.add(*cons), scop.statements, scop.arrays)
