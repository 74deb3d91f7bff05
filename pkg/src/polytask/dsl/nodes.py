"""AST for the loop-nest DSL.

Every node carries a ``loc`` that is excluded from equality, so two trees
parsed from differently formatted sources compare structurally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class SourceLocation:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


NOLOC = SourceLocation(1, 1)


def _loc():
    return field(default=NOLOC, compare=False, repr=False)


# expressions -----------------------------------------------------------------

@dataclass(frozen=True)
class IntLit:
    value: int
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class FloatLit:
    value: float
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class Var:
    """Reference to an iterator, a symbolic parameter or a task scalar."""
    name: str
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class ArrayRef:
    array: str
    indices: tuple["Expr", ...] = ()
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / // %
    left: "Expr"
    right: "Expr"
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class Func:
    """Builtin function application: min, max, floord, ceild, abs, sqrt."""
    name: str
    args: tuple["Expr", ...]
    loc: SourceLocation = _loc()


Expr = Union[IntLit, FloatLit, Var, ArrayRef, BinOp, Neg, Func]

BUILTIN_FUNCS = {"min": (1, None), "max": (1, None), "floord": (2, 2),
                 "ceild": (2, 2), "abs": (1, 1), "sqrt": (1, 1)}


# statements ------------------------------------------------------------------

@dataclass(frozen=True)
class ForLoop:
    iterator: str
    lower: Expr
    upper: Expr  # exclusive
    body: tuple["Stmt", ...]
    parallel: bool = False
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class Assign:
    target: ArrayRef
    op: str  # = += -= *=
    value: Expr
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class CallStmt:
    """Opaque kernel call; array arguments are cells, others are scalars."""
    func: str
    args: tuple[Expr, ...]
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class Range:
    lo: Expr
    hi: Expr  # exclusive


@dataclass(frozen=True)
class Region:
    """Rectangular sub-array ``A[lo..hi][lo..hi]``."""
    array: str
    ranges: tuple[Range, ...]
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class ChunkBuild:
    name: str
    region: Region
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class ChunkFlatten:
    name: str
    chunk: str
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class TaskCall:
    """Asynchronous task submission. Arguments are cell refs (single-statement
    tasks) or flattened chunk names (loop-tasked variants)."""
    task: str
    args: tuple[Union[ArrayRef, Var], ...]
    using: tuple[Expr, ...] = ()
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class ChunkRebuild:
    name: str
    flat: str
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class WriteBack:
    region: Region
    chunk: str
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class Barrier:
    loc: SourceLocation = _loc()


Stmt = Union[ForLoop, Assign, CallStmt, ChunkBuild, ChunkFlatten, TaskCall,
             ChunkRebuild, WriteBack, Barrier]


# declarations ----------------------------------------------------------------

@dataclass(frozen=True)
class ParamDecl:
    name: str
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class ArrayDecl:
    name: str
    extents: tuple[Expr, ...]
    block: Optional[Expr] = None  # each cell holds a block x block matrix
    loc: SourceLocation = _loc()

    @property
    def rank(self) -> int:
        return len(self.extents)


IN, OUT, INOUT = "in", "out", "inout"
DIRECTIONS = (IN, OUT, INOUT)


@dataclass(frozen=True)
class TaskParam:
    direction: str
    target: Union[ArrayRef, Region]


@dataclass(frozen=True)
class TaskDef:
    name: str
    params: tuple[TaskParam, ...]
    using: tuple[str, ...]
    body: tuple[Stmt, ...]
    loc: SourceLocation = _loc()


@dataclass(frozen=True)
class Program:
    params: tuple[ParamDecl, ...] = ()
    arrays: tuple[ArrayDecl, ...] = ()
    tasks: tuple[TaskDef, ...] = ()
    body: tuple[Stmt, ...] = ()

    def array(self, name: str) -> ArrayDecl:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)

    def task(self, name: str) -> TaskDef:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)


def walk_stmts(stmts):
    """Pre-order traversal over statements, descending into loops."""
    for s in stmts:
        yield s
        if isinstance(s, ForLoop):
            yield from walk_stmts(s.body)


def walk_expr(e):
    yield e
    if isinstance(e, ArrayRef):
        for i in e.indices:
            yield from walk_expr(i)
    elif isinstance(e, BinOp):
        yield from walk_expr(e.left)
        yield from walk_expr(e.right)
    elif isinstance(e, Neg):
        yield from walk_expr(e.operand)
    elif isinstance(e, Func):
        for a in e.args:
            yield from walk_expr(a)


def loop_depth(stmts) -> int:
    best = 0
    for s in stmts:
        if isinstance(s, ForLoop):
            best = max(best, 1 + loop_depth(s.body))
    return best
