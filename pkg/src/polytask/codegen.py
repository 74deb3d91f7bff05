"""Polyhedra scanning back into loops, and emission of generated programs."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .dsl import BinOp, ForLoop, Func, IntLit, Neg, Program, Var, pretty_print
from .dsl.printer import _stmt_lines, format_expr, format_region
from .dsl.nodes import Region
from .poly import AffineExpr, Constraint
from .scop import Scop, ScopStatement


class UnscannableDomain(ValueError):
    def __init__(self, message: str, level: int):
        super().__init__(f"level {level}: {message}")
        self.level = level


# affine forms as DSL expressions ------------------------------------------------

def _int(v: Fraction) -> int:
    if v.denominator != 1:
        raise ValueError(f"non-integral coefficient {v}")
    return int(v)


def affine_to_expr(e: AffineExpr, order: Sequence[str] = ()):
    """DSL expression for an integral affine form; terms follow ``order``."""
    names = [n for n in order if e.coeff(n)] + sorted(set(e.variables()) - set(order))
    out = None
    for n in names:
        c = _int(e.coeff(n))
        mag = Var(n) if abs(c) == 1 else BinOp("*", IntLit(abs(c)), Var(n))
        if out is None:
            out = mag if c > 0 else Neg(mag)
        else:
            out = BinOp("+" if c > 0 else "-", out, mag)
    k = _int(e.constant)
    if out is None:
        return int_lit(k)
    if k:
        out = BinOp("+" if k > 0 else "-", out, IntLit(abs(k)))
    return out


def int_lit(v: int):
    return IntLit(v) if v >= 0 else Neg(IntLit(-v))


def _lower(num: AffineExpr, den: int, order):
    """Expression for ``ceil(num / den)``."""
    if num.is_constant():
        return int_lit(-((-_int(num.constant)) // den))
    if den == 1:
        return affine_to_expr(num, order)
    return Func("ceild", (affine_to_expr(num, order), IntLit(den)))


def _upper(num: AffineExpr, den: int, order):
    """Exclusive bound ``floor(num / den) + 1``."""
    if num.is_constant():
        return int_lit(_int(num.constant) // den + 1)
    if den == 1:
        return affine_to_expr(num + 1, order)
    return BinOp("+", Func("floord", (affine_to_expr(num, order), IntLit(den))), IntLit(1))


def _const_value(e) -> Optional[int]:
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Neg) and isinstance(e.operand, IntLit):
        return -e.operand.value
    return None


def _combine(name: str, exprs: list):
    """``max``/``min`` of candidate bounds with duplicates and constants folded."""
    pick = max if name == "max" else min
    consts = [v for v in map(_const_value, exprs) if v is not None]
    seen, rest = set(), []
    for e in exprs:
        if _const_value(e) is not None:
            continue
        key = format_expr(e)
        if key not in seen:
            seen.add(key)
            rest.append(e)
    if consts:
        rest.append(int_lit(pick(consts)))
    if len(rest) == 1:
        return rest[0]
    return Func(name, tuple(rest))


def bounds_from_constraints(cons: Sequence[Constraint], x: str, order: Sequence[str], level: int = 0):
    """(lower, exclusive upper) expressions for ``x`` from constraints whose
    remaining variables are all outer."""
    lows, ups = [], []
    for c in cons:
        a = c.expr.coeff(x)
        if not a:
            continue
        rest = AffineExpr({k: v for k, v in c.expr.coeffs.items() if k != x}, c.expr.constant)
        if c.is_eq:
            if a < 0:
                a, rest = -a, -rest
            lows.append(_lower(-rest, _int(a), order))
            ups.append(_upper(-rest, _int(a), order))
        elif a > 0:
            lows.append(_lower(-rest, _int(a), order))
        else:
            ups.append(_upper(rest, _int(-a), order))
    if not lows or not ups:
        raise UnscannableDomain(f"no {'lower' if not lows else 'upper'} bound for {x!r}", level)
    return _combine("max", lows), _combine("min", ups)


# scanning ----------------------------------------------------------------------

@dataclass
class LoopNode:
    iterator: str
    level: int
    key: tuple  # (level, constant schedule prefix)
    lower: object
    upper: object
    children: list = field(default_factory=list)


@dataclass
class Leaf:
    statement: ScopStatement


def level_constraints(st: ScopStatement, level: int) -> list[Constraint]:
    """Constraints of ``st.domain`` whose innermost iterator is at ``level`` (1-based)."""
    pos = {it: k for k, it in enumerate(st.iterators)}
    out = []
    for c in st.domain.constraints:
        inner = max((pos[v] for v in c.expr.variables() if v in pos), default=-1)
        if inner == level - 1:
            out.append(c)
    return out


def _check_scannable(st: ScopStatement):
    pos = set(st.iterators)
    for c in st.domain.constraints:
        if not (c.expr.variables() & pos):
            if c.trivial() is None or c.trivial() is False:
                raise UnscannableDomain(f"statement S{st.id} has a parameter-only guard {c}", 0)
    for lvl, it in enumerate(st.iterators, 1):
        row = st.schedule[2 * lvl - 1]
        if row != AffineExpr.var(it):
            raise UnscannableDomain(f"S{st.id} scattering row {2 * lvl - 1} is not {it!r}", lvl)
        if not st.schedule[2 * lvl - 2].is_constant():
            raise UnscannableDomain(f"S{st.id} scattering row {2 * lvl - 2} is not constant", lvl)
    if not st.schedule[-1].is_constant() or len(st.schedule) != 2 * st.depth + 1:
        raise UnscannableDomain(f"S{st.id} has a malformed scattering", st.depth)


def scan(s: Scop) -> list:
    """Loop tree (LoopNode/Leaf) visiting every statement domain in schedule order."""
    for st in s.statements:
        _check_scannable(st)
    order_names = lambda st: list(st.iterators) + list(s.params)

    def build(stmts: list[ScopStatement], level: int, prefix: tuple) -> list:
        # group by the constant at scattering position 2 * level
        groups: dict = {}
        for st in stmts:
            c = int(st.schedule[2 * level].constant)
            groups.setdefault(c, []).append(st)
        out = []
        for c in sorted(groups):
            group = groups[c]
            inner = [st for st in group if st.depth > level]
            leaves = [st for st in group if st.depth == level]
            for st in leaves:
                out.append(Leaf(st))
            if not inner:
                continue
            if leaves:
                raise UnscannableDomain("statement and loop share a scattering position", level + 1)
            it = inner[0].iterators[level]
            ref = level_constraints(inner[0], level + 1)
            for st in inner[1:]:
                if st.iterators[level] != it or set(level_constraints(st, level + 1)) != set(ref):
                    raise UnscannableDomain(
                        f"statements S{inner[0].id} and S{st.id} disagree on loop bounds", level + 1)
            lo, hi = bounds_from_constraints(ref, it, order_names(inner[0]), level + 1)
            key = (level + 1, prefix + (c,))
            node = LoopNode(it, level + 1, key, lo, hi)
            node.children = build(inner, level + 1, prefix + (c,))
            out.append(node)
        return out

    return build(list(s.statements), 0, ())


def tree_to_stmts(nodes, leaf: Callable = None, parallel: Callable = None) -> tuple:
    """DSL statements for a loop tree. ``leaf(statement)`` yields the statements
    replacing a Leaf; ``parallel(key)`` decides the pragma on each loop."""
    out = []
    for n in nodes:
        if isinstance(n, Leaf):
            out.extend(leaf(n.statement) if leaf else [n.statement.body])
        else:
            body = tree_to_stmts(n.children, leaf, parallel)
            out.append(ForLoop(n.iterator, n.lower, n.upper, body,
                               bool(parallel(n.key)) if parallel else False))
    return tuple(out)


def generate_loops(s: Scop, parallel: Callable = None) -> tuple:
    """Loop nest statements visiting each statement's domain in schedule order."""
    return tree_to_stmts(scan(s), parallel=parallel)


# emission --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratedProgram:
    source: str
    task_registry: tuple  # (task name, ((direction, parameter text), ...))
    provenance: tuple  # (original body index or None, (first line, last line))
    program: Program


def emit_program(p: Program, origins: Sequence = ()) -> GeneratedProgram:
    """Print a generated program. ``origins[k]`` is the original top-level
    statement index that produced ``p.body[k]`` (None for added code)."""
    source = pretty_print(p)
    header = source.count("\n") - sum(len(_stmt_lines(s, 0)) for s in p.body)
    line = header + 1
    spans: dict = {}
    order = []
    for k, s in enumerate(p.body):
        n = len(_stmt_lines(s, 0))
        origin = origins[k] if k < len(origins) else None
        if origin not in spans:
            spans[origin] = [line, line + n - 1]
            order.append(origin)
        else:
            spans[origin][1] = line + n - 1
        line += n
    registry = tuple(
        (t.name, tuple((tp.direction, format_region(tp.target) if isinstance(tp.target, Region)
                        else format_expr(tp.target)) for tp in t.params))
        for t in p.tasks)
    prov = tuple((o, tuple(spans[o])) for o in order)
    return GeneratedProgram(source, registry, prov, p)


__all__ = ["UnscannableDomain", "affine_to_expr", "bounds_from_constraints", "scan",
           "generate_loops", "tree_to_stmts", "LoopNode", "Leaf", "level_constraints",
           "GeneratedProgram", "emit_program", "int_lit"]
