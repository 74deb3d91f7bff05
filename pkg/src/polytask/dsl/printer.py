"""Canonical pretty-printer; ``parse(pretty_print(p)) == p`` for parsed programs."""
from __future__ import annotations

from .nodes import (
    ArrayRef, Assign, Barrier, BinOp, CallStmt, ChunkBuild, ChunkFlatten,
    ChunkRebuild, FloatLit, ForLoop, Func, IntLit, Neg, Program, Region,
    TaskCall, Var, WriteBack,
)
from .parser import PRAGMA

INDENT = "    "
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "//": 2, "%": 2}


def format_expr(e, prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        text = repr(float(e.value))
        return text if ("." in text or "e" in text) else text + ".0"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, ArrayRef):
        return e.array + "".join(f"[{format_expr(i)}]" for i in e.indices)
    if isinstance(e, Func):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = format_expr(e.operand, 3)
        s = "-" + inner
        return s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        # left-associative: right operand needs parens at equal precedence
        s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(f"not an expression: {e!r}")


def format_region(r: Region) -> str:
    return r.array + "".join(f"[{format_expr(x.lo)}..{format_expr(x.hi)}]" for x in r.ranges)


def _stmt_lines(s, depth: int) -> list[str]:
    pad = INDENT * depth
    if isinstance(s, ForLoop):
        lines = []
        if s.parallel:
            lines.append(pad + PRAGMA)
        lines.append(f"{pad}for {s.iterator} in {format_expr(s.lower)}..{format_expr(s.upper)} {{")
        for b in s.body:
            lines.extend(_stmt_lines(b, depth + 1))
        lines.append(pad + "}")
        return lines
    if isinstance(s, Assign):
        return [f"{pad}{format_expr(s.target)} {s.op} {format_expr(s.value)};"]
    if isinstance(s, CallStmt):
        return [f"{pad}{s.func}({', '.join(format_expr(a) for a in s.args)});"]
    if isinstance(s, TaskCall):
        text = f"{pad}{s.task}({', '.join(format_expr(a) for a in s.args)})"
        if s.using:
            text += f" using ({', '.join(format_expr(u) for u in s.using)})"
        return [text + ";"]
    if isinstance(s, ChunkBuild):
        return [f"{pad}chunk {s.name} = {format_region(s.region)};"]
    if isinstance(s, ChunkFlatten):
        return [f"{pad}flatten {s.name} = {s.chunk};"]
    if isinstance(s, ChunkRebuild):
        return [f"{pad}rebuild {s.name} = {s.flat};"]
    if isinstance(s, WriteBack):
        return [f"{pad}writeback {format_region(s.region)} = {s.chunk};"]
    if isinstance(s, Barrier):
        return [pad + "barrier;"]
    raise TypeError(f"not a statement: {s!r}")


def format_stmts(stmts, depth: int = 0) -> str:
    lines = []
    for s in stmts:
        lines.extend(_stmt_lines(s, depth))
    return "\n".join(lines)


def pretty_print(p: Program) -> str:
    lines = []
    if p.params:
        lines.append(f"param {', '.join(d.name for d in p.params)};")
    for a in p.arrays:
        text = "array " + a.name + "".join(f"[{format_expr(x)}]" for x in a.extents)
        if a.block is not None:
            text += f" block {format_expr(a.block)}"
        lines.append(text + ";")
    for t in p.tasks:
        params = []
        for tp in t.params:
            target = format_region(tp.target) if isinstance(tp.target, Region) else format_expr(tp.target)
            params.append(f"{tp.direction} {target}")
        head = f"task {t.name}({', '.join(params)})"
        if t.using:
            head += f" using ({', '.join(t.using)})"
        lines.append(head + " {")
        for s in t.body:
            lines.extend(_stmt_lines(s, 1))
        lines.append("}")
    for s in p.body:
        lines.extend(_stmt_lines(s, 0))
    return "\n".join(lines) + "\n"
