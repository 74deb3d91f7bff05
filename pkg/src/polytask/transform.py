"""Parallel-loop detection, permutability-checked tiling and taskification."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .codegen import (
    LoopNode, Leaf, UnscannableDomain, affine_to_expr, bounds_from_constraints, scan,
    tree_to_stmts,
)
from .dependence import (
    Dependence, _nonempty, compute_dependences, dst_name, src_name,
)
from .dsl import (
    ArrayRef, Assign, CallStmt, ChunkBuild, ChunkFlatten, ChunkRebuild, ForLoop, Func,
    Range, Region, TaskCall, TaskDef, TaskParam, Var, WriteBack,
)
from .dsl.nodes import IN, INOUT, OUT, Barrier, walk_expr, walk_stmts
from .poly import AffineExpr, Constraint, Polyhedron, eq, ge, project_onto
from .scop import READ, WRITE, AccessRelation, Scop, ScopStatement, to_affine


class IllegalTiling(ValueError):
    def __init__(self, dep: Dependence, level: int):
        super().__init__(f"tiling level {level} is illegal: {dep.kind} S{dep.src} -> S{dep.dst} "
                         f"on {dep.array} has a negative component")
        self.dependence = dep
        self.level = level


class TaskifyTooDeep(ValueError):
    pass


class NoParallelismWarning(UserWarning):
    pass


DEFAULT_TILE_SIZE = 8


@dataclass
class LoopAnnotations:
    """Per-loop parallel flags (loops keyed by ``(level, constant prefix)``),
    tile sizes of the outermost band and the taskification level."""
    parallel: dict = field(default_factory=dict)
    tile_sizes: tuple[int, ...] = ()
    taskify_level: int = 0

    def is_parallel(self, key) -> bool:
        return self.parallel.get(key, False)

    def parallel_levels(self) -> list[int]:
        """Levels at which every loop is parallel."""
        levels: dict = {}
        for (lvl, _), flag in self.parallel.items():
            levels[lvl] = levels.get(lvl, True) and flag
        return sorted(l for l, f in levels.items() if f)


def loop_key(st: ScopStatement, level: int) -> tuple:
    return (level, tuple(int(st.schedule[2 * k].constant) for k in range(level)))


def detect_parallel_loops(s: Scop, deps: Sequence[Dependence], tile_sizes=(),
                          taskify_level: int = 0) -> LoopAnnotations:
    carried = {loop_key(s.statement(d.src), d.carried_level) for d in deps if d.carried_level}
    parallel = {}
    for st in s.statements:
        for lvl in range(1, st.depth + 1):
            key = loop_key(st, lvl)
            parallel[key] = key not in carried
    return LoopAnnotations(dict(sorted(parallel.items())), tuple(tile_sizes), taskify_level)


# tiling ----------------------------------------------------------------------------

def shared_band(s: Scop) -> int:
    """Number of outermost loops enclosing every statement."""
    if not s.statements:
        return 0
    first = s.statements[0]
    n = 0
    for lvl in range(1, min(st.depth for st in s.statements) + 1):
        if any(loop_key(st, lvl) != loop_key(first, lvl) or
               st.iterators[lvl - 1] != first.iterators[lvl - 1] for st in s.statements):
            break
        n = lvl
    return n


def check_tiling_legality(s: Scop, band: int, deps: Optional[Sequence[Dependence]] = None):
    """Raise IllegalTiling if a dependence has a negative component in the band."""
    if deps is None:
        deps = compute_dependences(s)
    for d in deps:
        S, T = s.statement(d.src), s.statement(d.dst)
        for lvl in range(1, min(band, d.common_levels) + 1):
            ps = S.schedule[2 * lvl - 1].rename({it: src_name(it) for it in S.iterators})
            pt = T.schedule[2 * lvl - 1].rename({it: dst_name(it) for it in T.iterators})
            if _nonempty(d.relation.add(ge(ps, pt + 1)), s.params):
                raise IllegalTiling(d, lvl)


def _fresh(base: str, taken: set) -> str:
    name = base
    k = 1
    while name in taken:
        k += 1
        name = f"{base}{k}"
    taken.add(name)
    return name


def tile(s: Scop, sizes: Sequence[int], deps: Optional[Sequence[Dependence]] = None,
         reserved: Sequence[str] = ()) -> Scop:
    """Tile the outermost ``len(sizes)`` loops, which every statement must share."""
    sizes = tuple(int(x) for x in sizes)
    if any(x < 1 for x in sizes):
        raise ValueError("tile sizes must be positive")
    band = len(sizes)
    if band == 0:
        return s
    if band > shared_band(s):
        raise ValueError(f"cannot tile {band} levels: only {shared_band(s)} loops are shared")
    check_tiling_legality(s, band, deps)
    taken = set(s.params) | set(reserved) | {a for a, _ in s.arrays}
    for st in s.statements:
        taken |= set(st.iterators)
    first = s.statements[0]
    tnames = [_fresh(f"{first.iterators[k]}_t", taken) for k in range(band)]
    params = list(s.params)

    # tile-loop bounds: project the shared outer levels, identical for all statements
    tile_cons: list[Constraint] = []
    for lvl in range(1, band + 1):
        x, t, T = first.iterators[lvl - 1], tnames[lvl - 1], sizes[lvl - 1]
        tile_cons += [ge(AffineExpr.var(x), AffineExpr.var(t, T)),
                      ge(AffineExpr.var(t, T) + (T - 1), AffineExpr.var(x))]
    pos = {it: k for k, it in enumerate(first.iterators)}
    projected: list[Constraint] = []
    for lvl in range(1, band + 1):
        outer = [c for c in first.domain.constraints
                 if max((pos[v] for v in c.expr.variables() if v in pos), default=-1) < lvl]
        space = tnames[:lvl] + list(first.iterators[:lvl]) + params
        p = Polyhedron(tuple(space), tuple(outer) + tuple(tile_cons[:2 * lvl]) + s.context.constraints)
        proj = project_onto(p, tnames[:lvl] + params)
        for c in proj.constraints:
            if c.expr.variables() & set(tnames) and c not in projected:
                projected.append(c)

    statements = []
    for st in s.statements:
        iters = tuple(tnames) + st.iterators
        dom = Polyhedron(iters + tuple(params),
                         tuple(projected) + tuple(tile_cons) + st.domain.constraints)
        sched = [st.schedule[0]]
        for t in tnames:
            sched += [AffineExpr.var(t), AffineExpr.const(0)]
        sched += list(st.schedule[1:])
        statements.append(ScopStatement(st.id, iters, dom, tuple(sched), st.accesses, st.body,
                                        sizes))
    return Scop(s.params, s.context, tuple(statements), s.arrays)


def read_tile_sizes(text: str) -> tuple[int, ...]:
    """Parse a ``tile.sizes`` file: one positive integer per line."""
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            v = int(line)
        except ValueError:
            raise ValueError(f"tile.sizes line {n}: expected an integer, found {line!r}") from None
        if v < 1:
            raise ValueError(f"tile.sizes line {n}: tile sizes must be positive")
        out.append(v)
    return tuple(out)


# directions ------------------------------------------------------------------------

def infer_directions(accesses: Sequence[AccessRelation], exact_writes: Optional[set] = None):
    """Direction per distinct (array, subscripts) parameter, in first-seen order.

    ``exact_writes`` (optional) lists parameter keys whose write set is known
    to cover every cell of the parameter; without it, a written and unread
    parameter is OUT.
    """
    seen: dict = {}
    for a in accesses:
        key = (a.array, a.subscripts)
        r, w = seen.get(key, (False, False))
        seen[key] = (r or a.kind == READ, w or a.kind == WRITE)
    out = []
    for key, (r, w) in seen.items():
        if not w:
            d = IN
        elif not r and (exact_writes is None or key in exact_writes):
            d = OUT
        else:
            d = INOUT
        out.append((key, d))
    return out


# taskification ----------------------------------------------------------------------

@dataclass(frozen=True)
class TaskProgram:
    task_defs: tuple[TaskDef, ...]
    main_body: tuple  # DSL statements, ending with a Barrier


def _refs_in(stmt) -> list[ArrayRef]:
    """Array cells referenced by a statement, in source order."""
    exprs = [stmt.target, stmt.value] if isinstance(stmt, Assign) else list(stmt.args)
    out = []
    for e in exprs:
        for sub in walk_expr(e):
            if isinstance(sub, ArrayRef) and sub not in out:
                out.append(sub)
    return out


def _vars_in(stmts) -> set[str]:
    names = set()

    def exprs_of(s):
        if isinstance(s, ForLoop):
            return [s.lower, s.upper]
        if isinstance(s, Assign):
            return [s.target, s.value]
        if isinstance(s, CallStmt):
            return list(s.args)
        return []

    for s in walk_stmts(stmts):
        for e in exprs_of(s):
            for sub in walk_expr(e):
                if isinstance(sub, Var):
                    names.add(sub.name)
    return names


def statement_task(st: ScopStatement, params: Sequence[str]) -> tuple[TaskDef, TaskCall]:
    """Single-statement task ``S<k>_task`` and the call replacing the statement."""
    refs = _refs_in(st.body)
    allowed = set(st.iterators) | set(params)
    by_key = {}
    for r in refs:
        by_key.setdefault((r.array, tuple(to_affine(i, allowed) for i in r.indices)), r)
    dirs = infer_directions(st.accesses)
    tparams = tuple(TaskParam(d, by_key[key]) for key, d in dirs)
    used = _vars_in([st.body])
    using = tuple(it for it in st.iterators if it in used)
    td = TaskDef(f"S{st.id}_task", tparams, using, (st.body,))
    call = TaskCall(td.name, tuple(p.target for p in tparams), tuple(Var(u) for u in using))
    return td, call


def _region_bounds(st: ScopStatement, sub: AffineExpr, outer: Sequence[str],
                   params: Sequence[str], context: Polyhedron):
    """(lo, hi) AffineExpr candidate lists bounding ``sub`` over the inner
    iterators of ``st`` with ``outer`` iterators fixed."""
    y = "__cell"
    space = (y,) + st.iterators + tuple(params)
    p = Polyhedron(space, st.domain.constraints + context.constraints
                   + (eq(AffineExpr.var(y), sub),))
    proj = project_onto(p, [y] + list(outer) + list(params))
    return [c for c in proj.constraints if c.expr.coeff(y)]


def _exact_write(st: ScopStatement, acc: AccessRelation, outer: Sequence[str]) -> bool:
    """True when the write covers exactly a box: every dimension is either
    fixed by outer iterators or a distinct inner iterator, all inner iterators
    are used, and inner bounds only mention outer iterators and parameters."""
    inner = [it for it in st.iterators if it not in outer]
    used = []
    for s in acc.subscripts:
        vs = s.variables() & set(inner)
        if not vs:
            continue
        if len(vs) != 1 or s != AffineExpr.var(next(iter(vs))):
            return False
        used.append(next(iter(vs)))
    if sorted(used) != sorted(inner) or len(set(used)) != len(used):
        return False
    for c in st.domain.constraints:
        if len(c.expr.variables() & set(inner)) > 1:
            return False
    return True


def loop_task(node: LoopNode, outer: Sequence[str], s: Scop, counter: itertools.count,
              parallel=None) -> tuple[TaskDef, list]:
    """Loop-tasked ``S<k>_task_lt`` for the subtree ``node`` and the main-body
    statements that chunk, call and write back its data."""
    leaves: list[ScopStatement] = []

    def collect(n):
        if isinstance(n, Leaf):
            leaves.append(n.statement)
        else:
            for c in n.children:
                collect(c)
    collect(node)
    params = list(s.params)
    order = list(outer) + params
    arrays: dict = {}  # name -> per-dimension (lows, highs), reads, writes, exact
    for st in leaves:
        for acc in st.accesses:
            info = arrays.setdefault(acc.array, {"lo": None, "hi": None, "r": False, "w": False,
                                                 "exact": True, "writes": 0})
            bounds_lo, bounds_hi = [], []
            for sub in acc.subscripts:
                cons = _region_bounds(st, sub, outer, params, s.context)
                lo, hi = bounds_from_constraints(cons, "__cell", order)
                bounds_lo.append(lo)
                bounds_hi.append(hi)
            if info["lo"] is None:
                info["lo"] = [[x] for x in bounds_lo]
                info["hi"] = [[x] for x in bounds_hi]
            else:
                for k in range(len(bounds_lo)):
                    info["lo"][k].append(bounds_lo[k])
                    info["hi"][k].append(bounds_hi[k])
            if acc.kind == READ:
                info["r"] = True
            else:
                info["w"] = True
                info["writes"] += 1
                info["exact"] = info["exact"] and _exact_write(st, acc, outer)
    from .codegen import _combine
    tparams, call_args, pre, post = [], [], [], []
    n = next(counter)
    for name, info in arrays.items():
        ranges = tuple(Range(_combine("min", lo), _combine("max", hi))
                       for lo, hi in zip(info["lo"], info["hi"]))
        region = Region(name, ranges)
        if not info["w"]:
            d = IN
        elif not info["r"] and info["writes"] == 1 and info["exact"]:
            d = OUT
        else:
            d = INOUT
        tparams.append(TaskParam(d, region))
        chunk, flat = f"{name}_chunk{n}", f"{name}_flat{n}"
        pre += [ChunkBuild(chunk, region), ChunkFlatten(flat, chunk)]
        call_args.append(Var(flat))
        if d != IN:
            post += [ChunkRebuild(chunk, flat), WriteBack(region, chunk)]
    body = tree_to_stmts([node], parallel=parallel)
    td = TaskDef(f"S{leaves[0].id}_task_lt", tuple(tparams), tuple(outer), body)
    call = TaskCall(td.name, tuple(call_args), tuple(Var(o) for o in outer))
    return td, pre + [call] + post


def taskify(s: Scop, ann: LoopAnnotations, counter: Optional[itertools.count] = None) -> TaskProgram:
    """Turn statements (level 0) or whole loops deeper than ``ann.taskify_level``
    into tasks. On tiled scops the level is capped at the tile band so that
    point loops are taskified."""
    counter = counter or itertools.count(1)
    level = ann.taskify_level
    tiled = bool(s.statements and s.statements[0].tile_sizes)
    if tiled:
        level = min(level, len(s.statements[0].tile_sizes))
    if level < 0:
        raise ValueError("taskify level must be non-negative")
    if level > s.max_depth:
        raise TaskifyTooDeep(f"taskify level {level} exceeds nest depth {s.max_depth}")
    tree = scan(s)
    parallel = ann.is_parallel
    defs: dict = {}
    kept_parallel = []

    def leaf(st):
        td, call = statement_task(st, s.params)
        defs.setdefault(td.name, td)
        return [call]

    def walk(nodes, outer) -> tuple:
        out = []
        for n in nodes:
            if isinstance(n, Leaf):
                out.extend(leaf(n.statement))
            elif level and n.level > level:
                td, stmts = loop_task(n, outer, s, counter, parallel)
                if tiled:
                    for st in _leaves(n):
                        plain, _ = statement_task(st, s.params)
                        defs.setdefault(plain.name, plain)
                defs.setdefault(td.name, td)
                kept_parallel.append(any(parallel(k) for k in _enclosing))
                out.extend(stmts)
            else:
                _enclosing.append(n.key)
                body = walk(n.children, outer + [n.iterator])
                _enclosing.pop()
                out.append(ForLoop(n.iterator, n.lower, n.upper, body, parallel(n.key)))
        return tuple(out)

    _enclosing: list = []
    body = walk(tree, [])
    if kept_parallel and not any(kept_parallel):
        warnings.warn(f"taskify level {level} leaves no parallel loop around the loop tasks",
                      NoParallelismWarning, stacklevel=2)
    return TaskProgram(tuple(sorted(defs.values(), key=_def_order)), body + (Barrier(),))


def _leaves(n) -> list[ScopStatement]:
    if isinstance(n, Leaf):
        return [n.statement]
    return [st for c in n.children for st in _leaves(c)]


def _def_order(td: TaskDef):
    base, _, rest = td.name.partition("_task")
    return (int(base[1:]), rest)
