"""Hand-written LL(1) parser for the loop-nest DSL (grammar in docs/grammar.md)."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .nodes import (
    BUILTIN_FUNCS, DIRECTIONS, ArrayDecl, ArrayRef, Assign, Barrier, BinOp,
    CallStmt, ChunkBuild, ChunkFlatten, ChunkRebuild, FloatLit, ForLoop, Func,
    IntLit, Neg, ParamDecl, Program, Range, Region, SourceLocation, TaskCall,
    TaskDef, TaskParam, Var, WriteBack,
)


class DslError(Exception):
    """Base class for DSL errors; always carries a source location."""

    def __init__(self, message: str, loc: SourceLocation):
        super().__init__(f"{loc}: {message}")
        self.message = message
        self.loc = loc


class DslSyntaxError(DslError):
    pass


class UndeclaredIdentifier(DslError):
    pass


class DuplicateDeclaration(DslError):
    pass


class RankMismatch(DslError):
    pass


KEYWORDS = {"param", "array", "block", "for", "in", "out", "inout", "task", "using",
            "chunk", "flatten", "rebuild", "writeback", "barrier"}

PRAGMA = "# pragma omp parallel for"

_TOKEN_RE = re.compile(r"""
    (?P<pragma>\#[ \t]*pragma[ \t]+omp[ \t]+parallel[ \t]+for[ \t]*(?=\n|$))
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<ws>[ \t\r]+)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\.\.|//|\+=|-=|\*=|[-+*/%=(){}\[\],;])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str  # int float ident kw op pragma eof
    text: str
    loc: SourceLocation


def tokenize(source: str) -> list[Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise DslSyntaxError(f"unexpected character {source[pos]!r}", SourceLocation(line, col))
        kind = m.lastgroup
        text = m.group()
        loc = SourceLocation(line, col)
        if kind == "nl":
            line, col = line + 1, 1
        else:
            col += len(text)
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            if kind not in ("ws", "comment"):
                tokens.append(Token(kind, text, loc))
        pos = m.end()
    tokens.append(Token("eof", "", SourceLocation(line, col)))
    return tokens


class _Scope:
    def __init__(self):
        self.frames: list[dict[str, str]] = [{}]

    def lookup(self, name):
        for f in reversed(self.frames):
            if name in f:
                return f[name]
        return None

    def declare(self, name, kind, loc):
        if self.lookup(name) is not None:
            raise DuplicateDeclaration(f"{name!r} is already declared", loc)
        self.frames[-1][name] = kind

    def push(self):
        self.frames.append({})

    def pop(self):
        self.frames.pop()


class Parser:
    def __init__(self, source: str, kernels: dict | None = None):
        self.toks = tokenize(source)
        self.pos = 0
        if kernels is None:
            from ..kernels import KERNELS
            kernels = KERNELS
        self.kernels = kernels
        self.scope = _Scope()
        self.arrays: dict[str, ArrayDecl] = {}
        self.tasks: dict[str, TaskDef] = {}

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, text, kind=None) -> bool:
        t = self.tok
        return t.text == text and (kind is None or t.kind == kind) and t.kind != "eof"

    def advance(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def expect(self, text, what=None) -> Token:
        if not self.at(text) or self.tok.kind in ("int", "float"):
            raise DslSyntaxError(f"expected {what or repr(text)}, found {self._found()}", self.tok.loc)
        return self.advance()

    def expect_ident(self, what="identifier") -> Token:
        if self.tok.kind != "ident":
            raise DslSyntaxError(f"expected {what}, found {self._found()}", self.tok.loc)
        return self.advance()

    def _found(self) -> str:
        t = self.tok
        return "end of input" if t.kind == "eof" else repr(t.text)

    # program
    def parse_program(self) -> Program:
        params, arrays, tasks = [], [], []
        while True:
            if self.at("param", "kw"):
                params.extend(self.param_decl())
            elif self.at("array", "kw"):
                arrays.append(self.array_decl())
            elif self.at("task", "kw"):
                tasks.append(self.task_def())
            else:
                break
        body = self.stmt_list(top=True)
        if self.tok.kind != "eof":
            raise DslSyntaxError(f"expected statement, found {self._found()}", self.tok.loc)
        return Program(tuple(params), tuple(arrays), tuple(tasks), tuple(body))

    def param_decl(self):
        self.advance()
        out = []
        while True:
            t = self.expect_ident("parameter name")
            self.scope.declare(t.text, "param", t.loc)
            out.append(ParamDecl(t.text, t.loc))
            if self.at(","):
                self.advance()
                continue
            break
        self.expect(";")
        return out

    def array_decl(self) -> ArrayDecl:
        self.advance()
        t = self.expect_ident("array name")
        extents = []
        while self.at("["):
            self.advance()
            extents.append(self.int_expr())
            self.expect("]")
        if len(extents) > 3:
            raise RankMismatch("arrays have rank at most 3", t.loc)
        block = None
        if self.at("block", "kw"):
            self.advance()
            block = self.int_expr()
        self.expect(";")
        self.scope.declare(t.text, "array", t.loc)
        decl = ArrayDecl(t.text, tuple(extents), block, t.loc)
        self.arrays[t.text] = decl
        return decl

    def task_def(self) -> TaskDef:
        start = self.advance()
        name = self.expect_ident("task name")
        self.scope.declare(name.text, "task", name.loc)
        self.expect("(")
        raw_params = []
        if not self.at(")"):
            while True:
                d = self.tok
                if d.kind != "kw" or d.text not in DIRECTIONS:
                    raise DslSyntaxError(f"expected parameter direction, found {self._found()}", d.loc)
                self.advance()
                arr = self.expect_ident("array name")
                raw_params.append((d.text, arr, self.pos))
                self.skip_brackets()
                if self.at(","):
                    self.advance()
                    continue
                break
        self.expect(")")
        using = []
        self.scope.push()
        if self.at("using", "kw"):
            self.advance()
            self.expect("(")
            if not self.at(")"):
                while True:
                    u = self.expect_ident("scalar name")
                    self.scope.declare(u.text, "scalar", u.loc)
                    using.append(u.text)
                    if not self.at(","):
                        break
                    self.advance()
            self.expect(")")
        # parameter subscripts may reference the scalars, so parse them now
        resume = self.pos
        params = []
        for direction, arr, p in raw_params:
            self.pos = p
            params.append(TaskParam(direction, self.ref_or_region(arr)))
        self.pos = resume
        self.expect("{")
        body = self.stmt_list()
        self.expect("}")
        self.scope.pop()
        td = TaskDef(name.text, tuple(params), tuple(using), tuple(body), start.loc)
        self.tasks[td.name] = td
        return td

    def skip_brackets(self):
        depth = 0
        while self.at("[") or depth:
            if self.tok.kind == "eof":
                raise DslSyntaxError("unterminated subscript", self.tok.loc)
            if self.at("["):
                depth += 1
            elif self.at("]"):
                depth -= 1
            self.advance()
            if depth == 0 and not self.at("["):
                break

    def ref_or_region(self, arr: Token):
        decl = self._array(arr)
        items = []
        is_region = False
        while self.at("["):
            self.advance()
            lo = self.int_expr()
            if self.at(".."):
                self.advance()
                hi = self.int_expr()
                items.append(Range(lo, hi))
                is_region = True
            else:
                items.append(lo)
            self.expect("]")
        if len(items) != decl.rank:
            raise RankMismatch(f"{arr.text!r} has rank {decl.rank}, got {len(items)} subscripts", arr.loc)
        if is_region:
            if not all(isinstance(x, Range) for x in items):
                raise DslSyntaxError("region subscripts must all be ranges", arr.loc)
            return Region(arr.text, tuple(items), arr.loc)
        return ArrayRef(arr.text, tuple(items), arr.loc)

    def _array(self, t: Token) -> ArrayDecl:
        kind = self.scope.lookup(t.text)
        if kind is None:
            raise UndeclaredIdentifier(f"undeclared identifier {t.text!r}", t.loc)
        if kind != "array":
            raise DslSyntaxError(f"{t.text!r} is not an array", t.loc)
        return self.arrays[t.text]

    # statements
    def stmt_list(self, top=False):
        out = []
        while not self.at("}") and self.tok.kind != "eof":
            out.append(self.stmt())
        return out

    def stmt(self):
        t = self.tok
        if t.kind == "pragma":
            self.advance()
            if not self.at("for", "kw"):
                raise DslSyntaxError(f"expected 'for' after parallel pragma, found {self._found()}", self.tok.loc)
            return self.for_loop(parallel=True)
        if t.kind == "kw":
            if t.text == "for":
                return self.for_loop()
            if t.text == "barrier":
                self.advance()
                self.expect(";")
                return Barrier(t.loc)
            if t.text == "chunk":
                self.advance()
                name = self.expect_ident("chunk name")
                self.expect("=")
                arr = self.expect_ident("array name")
                region = self.ref_or_region(arr)
                if not isinstance(region, Region):
                    raise DslSyntaxError("chunk needs a region", arr.loc)
                self.expect(";")
                self.scope.declare(name.text, "chunk", name.loc)
                return ChunkBuild(name.text, region, t.loc)
            if t.text in ("flatten", "rebuild"):
                self.advance()
                name = self.expect_ident("chunk name")
                self.expect("=")
                src = self.expect_ident("chunk name")
                if self.scope.lookup(src.text) != "chunk":
                    raise UndeclaredIdentifier(f"undeclared chunk {src.text!r}", src.loc)
                self.expect(";")
                if t.text == "flatten":
                    self.scope.declare(name.text, "chunk", name.loc)
                    return ChunkFlatten(name.text, src.text, t.loc)
                if self.scope.lookup(name.text) != "chunk":
                    raise UndeclaredIdentifier(f"undeclared chunk {name.text!r}", name.loc)
                return ChunkRebuild(name.text, src.text, t.loc)
            if t.text == "writeback":
                self.advance()
                arr = self.expect_ident("array name")
                region = self.ref_or_region(arr)
                if not isinstance(region, Region):
                    raise DslSyntaxError("writeback needs a region", arr.loc)
                self.expect("=")
                src = self.expect_ident("chunk name")
                if self.scope.lookup(src.text) != "chunk":
                    raise UndeclaredIdentifier(f"undeclared chunk {src.text!r}", src.loc)
                self.expect(";")
                return WriteBack(region, src.text, t.loc)
            raise DslSyntaxError(f"unexpected keyword {t.text!r}", t.loc)
        if t.kind == "ident":
            if self.peek().text == "(":
                return self.call_stmt()
            return self.assign()
        raise DslSyntaxError(f"expected statement, found {self._found()}", t.loc)

    def for_loop(self, parallel=False) -> ForLoop:
        start = self.advance()
        it = self.expect_ident("loop iterator")
        self.expect("in", "'in'")
        lo = self.int_expr()
        self.expect("..")
        hi = self.int_expr()
        self.scope.declare(it.text, "iter", it.loc)
        self.scope.push()
        self.expect("{")
        body = self.stmt_list()
        self.expect("}")
        self.scope.pop()
        self.scope.frames[-1].pop(it.text)
        return ForLoop(it.text, lo, hi, tuple(body), parallel, start.loc)

    def assign(self) -> Assign:
        t = self.expect_ident()
        target = self.ref_after_name(t)
        if not isinstance(target, ArrayRef):
            raise DslSyntaxError(f"cannot assign to {t.text!r}", t.loc)
        op = self.tok
        if op.text not in ("=", "+=", "-=", "*=") or op.kind != "op":
            raise DslSyntaxError(f"expected assignment operator, found {self._found()}", op.loc)
        self.advance()
        value = self.expr()
        self.expect(";")
        return Assign(target, op.text, value, t.loc)

    def call_stmt(self):
        t = self.advance()
        self.expect("(")
        args = []
        if not self.at(")"):
            while True:
                args.append(self.expr())
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        using = []
        if self.at("using", "kw"):
            self.advance()
            self.expect("(")
            if not self.at(")"):
                while True:
                    using.append(self.int_expr())
                    if not self.at(","):
                        break
                    self.advance()
            self.expect(")")
        self.expect(";")
        if t.text in self.tasks:
            td = self.tasks[t.text]
            if len(args) != len(td.params) or len(using) != len(td.using):
                raise DslSyntaxError(f"task {t.text!r} expects {len(td.params)} arguments and "
                                     f"{len(td.using)} scalars", t.loc)
            for a in args:
                if not isinstance(a, (ArrayRef, Var)):
                    raise DslSyntaxError("task arguments must be cells or chunks", t.loc)
            return TaskCall(t.text, tuple(args), tuple(using), t.loc)
        if using:
            raise DslSyntaxError("'using' is only valid for task calls", t.loc)
        kernel = self.kernels.get(t.text)
        if kernel is None:
            raise UndeclaredIdentifier(f"unknown kernel or task {t.text!r}", t.loc)
        if len(args) != len(kernel.directions):
            raise DslSyntaxError(f"kernel {t.text!r} takes {len(kernel.directions)} arguments, "
                                 f"got {len(args)}", t.loc)
        for a, d in zip(args, kernel.directions):
            if d != "in" and not isinstance(a, ArrayRef):
                raise DslSyntaxError(f"argument of {t.text!r} written by the kernel must be a cell", t.loc)
        return CallStmt(t.text, tuple(args), t.loc)

    # expressions
    def int_expr(self):
        return self.expr()

    def expr(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance()
            right = self.term()
            left = BinOp(op.text, left, right, op.loc)
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/", "//", "%"):
            op = self.advance()
            right = self.unary()
            left = BinOp(op.text, left, right, op.loc)
        return left

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            t = self.advance()
            return Neg(self.unary(), t.loc)
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return IntLit(int(t.text), t.loc)
        if t.kind == "float":
            self.advance()
            return FloatLit(float(t.text), t.loc)
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                if t.text not in BUILTIN_FUNCS:
                    raise UndeclaredIdentifier(f"unknown function {t.text!r}", t.loc)
                self.advance()
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.expr())
                        if not self.at(","):
                            break
                        self.advance()
                self.expect(")")
                lo, hi = BUILTIN_FUNCS[t.text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise DslSyntaxError(f"wrong number of arguments to {t.text}", t.loc)
                return Func(t.text, tuple(args), t.loc)
            return self.ref_after_name(t)
        raise DslSyntaxError(f"expected expression, found {self._found()}", t.loc)

    def ref_after_name(self, t: Token):
        kind = self.scope.lookup(t.text)
        if kind is None:
            raise UndeclaredIdentifier(f"undeclared identifier {t.text!r}", t.loc)
        if kind == "array":
            decl = self.arrays[t.text]
            idx = []
            while self.at("["):
                self.advance()
                idx.append(self.expr())
                self.expect("]")
            if len(idx) != decl.rank:
                raise RankMismatch(f"{t.text!r} has rank {decl.rank}, got {len(idx)} subscripts", t.loc)
            return ArrayRef(t.text, tuple(idx), t.loc)
        if kind in ("param", "iter", "scalar", "chunk"):
            if self.at("["):
                raise DslSyntaxError(f"{t.text!r} cannot be subscripted", self.tok.loc)
            return Var(t.text, t.loc)
        raise DslSyntaxError(f"{t.text!r} cannot be used in an expression", t.loc)


def parse(source: str, kernels: dict | None = None) -> Program:
    """Parse DSL source text into a :class:`Program`."""
    return Parser(source, kernels).parse_program()


def parse_statement(text: str, arrays: dict[str, int], names: Iterable[str],
                    kernels: dict | None = None):
    """Parse one statement given array ranks and the scalar names in scope."""
    p = Parser(text, kernels)
    for name, rank in arrays.items():
        loc = SourceLocation(1, 1)
        p.scope.declare(name, "array", loc)
        p.arrays[name] = ArrayDecl(name, tuple(IntLit(1) for _ in range(rank)), None, loc)
    for n in names:
        p.scope.declare(n, "iter", SourceLocation(1, 1))
    stmt = p.stmt()
    if p.tok.kind != "eof":
        raise DslSyntaxError(f"trailing input {p._found()}", p.tok.loc)
    return stmt
