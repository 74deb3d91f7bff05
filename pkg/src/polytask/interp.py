"""Interpreter for DSL programs, original or generated.

Without a runtime every statement runs sequentially on local arrays and
task calls execute inline on a private copy of their parameters. With a
:class:`~polytask.runtime.engine.Runtime`, array cells become data items,
task definitions are registered as runtime task types and task calls are
submitted asynchronously; master-side reads and writes synchronize.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from . import kernels as _kernels
from .dsl import (
    ArrayRef, Assign, Barrier, BinOp, CallStmt, ChunkBuild, ChunkFlatten, ChunkRebuild,
    FloatLit, ForLoop, Func, IntLit, Neg, Program, Region, TaskCall, TaskDef, Var, WriteBack,
)
from .dsl.nodes import IN, walk_stmts


class InterpreterError(RuntimeError):
    pass


@dataclass
class Chunk:
    """A rectangular sub-array gathered cell by cell, row-major."""
    shape: tuple[int, ...]
    elements: list

    def __post_init__(self):
        if math.prod(self.shape) != len(self.elements):
            raise ValueError(f"chunk of shape {self.shape} needs {math.prod(self.shape)} "
                             f"elements, got {len(self.elements)}")


def flatten_chunk(c: Chunk) -> list:
    return list(c.elements)


def rebuild_chunk(flat: list, shape: tuple[int, ...]) -> Chunk:
    return Chunk(tuple(shape), list(flat))


def _floord(a, b):
    return a // b


def _ceild(a, b):
    return -((-a) // b)


_FUNCS = {"min": min, "max": max, "floord": _floord, "ceild": _ceild, "abs": abs,
          "sqrt": lambda x: float(np.sqrt(x))}


class ArrayStore:
    """Cells of one declared array; cells are created lazily with zeros."""

    def __init__(self, name: str, extents: tuple[int, ...], block: Optional[int]):
        self.name = name
        self.extents = extents
        self.block = block
        self.cells: dict = {}

    def check(self, idx: tuple) -> tuple:
        if len(idx) != len(self.extents) or any(
                not 0 <= i < e for i, e in zip(idx, self.extents)):
            raise IndexError(f"{self.name}{''.join(f'[{i}]' for i in idx)} is out of bounds "
                             f"for extents {list(self.extents)}")
        return idx

    def default(self):
        return np.zeros((self.block, self.block)) if self.block else 0.0

    def all_indices(self):
        return np.ndindex(*self.extents)

    def assemble(self, value_of: Callable) -> np.ndarray:
        shape = self.extents + ((self.block, self.block) if self.block else ())
        out = np.zeros(shape)
        for idx in self.all_indices():
            out[idx] = value_of(idx)
        return out


def block_matrix(a: np.ndarray) -> np.ndarray:
    """``(m, m, b, b)`` block array as an ``(m*b, m*b)`` matrix."""
    m1, m2, b1, b2 = a.shape
    return a.transpose(0, 2, 1, 3).reshape(m1 * b1, m2 * b2)


class _LocalMemory:
    def __init__(self, stores):
        self.stores = stores

    def get(self, name, idx):
        st = self.stores[name]
        idx = st.check(idx)
        v = st.cells.get(idx)
        if v is None:
            v = st.cells[idx] = st.default()
        return v

    ref = get

    def set(self, name, idx, value):
        st = self.stores[name]
        st.cells[st.check(idx)] = value

    def bind(self, name, idx, ref):
        self.set(name, idx, ref)


class _RuntimeMemory:
    """Master view of runtime-managed cells: references are data items,
    value reads synchronize and value writes go through the runtime."""

    def __init__(self, stores, runtime):
        self.stores = stores
        self.rt = runtime

    def ref(self, name, idx):
        st = self.stores[name]
        idx = st.check(idx)
        item = st.cells.get(idx)
        if item is None:
            label = name + "".join(f"[{i}]" for i in idx)
            item = st.cells[idx] = self.rt.new_item(st.default(), label)
        return item

    def get(self, name, idx):
        return self.rt.wait_on(self.ref(name, idx))

    def set(self, name, idx, value):
        self.rt.master_write(self.ref(name, idx), value)

    def bind(self, name, idx, ref):
        st = self.stores[name]
        st.cells[st.check(idx)] = getattr(ref, "item", ref)


class _TaskMemory:
    """Private cells of one running task."""

    def __init__(self, task: str, cells: dict):
        self.task = task
        self.cells = cells

    def get(self, name, idx):
        try:
            return self.cells[(name, idx)]
        except KeyError:
            raise InterpreterError(f"task {self.task} accessed {name}{list(idx)} outside "
                                   f"its parameters") from None

    ref = get

    def set(self, name, idx, value):
        if (name, idx) not in self.cells:
            raise InterpreterError(f"task {self.task} wrote {name}{list(idx)} outside "
                                   f"its parameters")
        self.cells[(name, idx)] = value


class Interpreter:
    """Executes one program with fixed parameter values.

    ``on_statement(stmt, env)`` is called before every Assign and kernel call
    (including those inside inline tasks), which is how tests observe
    iteration order.
    """

    def __init__(self, program: Program, params: Mapping[str, int], runtime=None,
                 kernels: Optional[Mapping] = None,
                 on_statement: Optional[Callable] = None):
        missing = [n for n in program.param_names if n not in params]
        if missing:
            raise InterpreterError(f"missing parameter values: {', '.join(missing)}")
        self.program = program
        self.params = {n: int(params[n]) for n in program.param_names}
        self.kernels = kernels if kernels is not None else _kernels.KERNELS
        self.on_statement = on_statement
        self.runtime = runtime
        self.stores = {}
        for a in program.arrays:
            ext = tuple(int(self.eval(e, self.params, None)) for e in a.extents)
            blk = int(self.eval(a.block, self.params, None)) if a.block is not None else None
            self.stores[a.name] = ArrayStore(a.name, ext, blk)
        self.tasks = {t.name: t for t in program.tasks}
        if runtime is None:
            self.memory = _LocalMemory(self.stores)
        else:
            self.memory = _RuntimeMemory(self.stores, runtime)
            for t in program.tasks:
                self._register(t)

    # expressions -------------------------------------------------------------------
    def eval(self, e, env, mem):
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, FloatLit):
            return e.value
        if isinstance(e, Var):
            try:
                return env[e.name]
            except KeyError:
                raise InterpreterError(f"unbound name {e.name!r}") from None
        if isinstance(e, ArrayRef):
            return mem.get(e.array, self.index(e, env, mem))
        if isinstance(e, Neg):
            v = self.eval(e.operand, env, mem)
            if not isinstance(v, int):
                _kernels.count_flops(np.size(v))
            return -v
        if isinstance(e, BinOp):
            a = self.eval(e.left, env, mem)
            b = self.eval(e.right, env, mem)
            if e.op == "+":
                r = a + b
            elif e.op == "-":
                r = a - b
            elif e.op == "*":
                r = a * b
            elif e.op == "/":
                r = a / b
            elif e.op == "//":
                r = a // b
            elif e.op == "%":
                r = a % b
            else:
                raise InterpreterError(f"unknown operator {e.op!r}")
            if not isinstance(r, int):
                _kernels.count_flops(np.size(r))
            return r
        if isinstance(e, Func):
            return _FUNCS[e.name](*(self.eval(a, env, mem) for a in e.args))
        raise InterpreterError(f"cannot evaluate {e!r}")

    def index(self, ref: ArrayRef, env, mem) -> tuple:
        idx = tuple(self.eval(i, env, mem) for i in ref.indices)
        for i in idx:
            if not isinstance(i, (int, np.integer)):
                raise InterpreterError(f"non-integer subscript {i!r} in {ref.array}")
        return tuple(int(i) for i in idx)

    def region_cells(self, region: Region, env) -> tuple[tuple, list]:
        bounds = [(int(self.eval(r.lo, env, None)), int(self.eval(r.hi, env, None)))
                  for r in region.ranges]
        shape = tuple(max(0, hi - lo) for lo, hi in bounds)
        cells = [tuple(lo + k for (lo, _), k in zip(bounds, off)) for off in np.ndindex(*shape)]
        return shape, cells

    # statements ------------------------------------------------------------------------
    def run(self) -> "Interpreter":
        self.exec_block(self.program.body, dict(self.params), self.memory)
        return self

    def exec_block(self, stmts, env, mem) -> None:
        for s in stmts:
            self.exec_stmt(s, env, mem)

    def exec_stmt(self, s, env, mem) -> None:
        if isinstance(s, ForLoop):
            lo = self.eval(s.lower, env, mem)
            hi = self.eval(s.upper, env, mem)
            saved = env.get(s.iterator, _MISSING)
            for v in range(int(lo), int(hi)):
                env[s.iterator] = v
                self.exec_block(s.body, env, mem)
            if saved is _MISSING:
                env.pop(s.iterator, None)
            else:
                env[s.iterator] = saved
        elif isinstance(s, Assign):
            if self.on_statement:
                self.on_statement(s, env)
            idx = self.index(s.target, env, mem)
            v = self.eval(s.value, env, mem)
            if s.op != "=":
                old = mem.get(s.target.array, idx)
                v = {"+=": old + v, "-=": old - v, "*=": old * v}[s.op]
                _kernels.count_flops(np.size(v))
            mem.set(s.target.array, idx, v)
        elif isinstance(s, CallStmt):
            if self.on_statement:
                self.on_statement(s, env)
            self._call_kernel(s, env, mem)
        elif isinstance(s, TaskCall):
            self._task_call(s, env, mem)
        elif isinstance(s, ChunkBuild):
            shape, cells = self.region_cells(s.region, env)
            env[s.name] = Chunk(shape, [mem.ref(s.region.array, c) for c in cells])
        elif isinstance(s, ChunkFlatten):
            env[s.name] = flatten_chunk(self._chunk(env, s.chunk))
        elif isinstance(s, ChunkRebuild):
            env[s.name] = rebuild_chunk(env[s.flat], self._chunk(env, s.name).shape)
        elif isinstance(s, WriteBack):
            shape, cells = self.region_cells(s.region, env)
            chunk = self._chunk(env, s.chunk)
            if chunk.shape != shape:
                raise InterpreterError(f"write-back of {s.chunk}: shape {chunk.shape} "
                                       f"does not match region {shape}")
            for c, v in zip(cells, chunk.elements):
                mem.bind(s.region.array, c, v)
        elif isinstance(s, Barrier):
            if self.runtime is not None and mem is self.memory:
                self.runtime.barrier()
        else:
            raise InterpreterError(f"cannot execute {type(s).__name__}")

    def _chunk(self, env, name) -> Chunk:
        c = env.get(name)
        if not isinstance(c, Chunk):
            raise InterpreterError(f"{name!r} is not a chunk")
        return c

    def _call_kernel(self, s: CallStmt, env, mem) -> None:
        k = self.kernels.get(s.func)
        if k is None:
            raise InterpreterError(f"unknown kernel {s.func!r}")
        refs = [(a.array, self.index(a, env, mem)) if isinstance(a, ArrayRef) else None
                for a in s.args]
        vals = [mem.get(*r) if r else self.eval(a, env, mem) for r, a in zip(refs, s.args)]
        outs = k(*vals)
        for pos, v in zip(k.written, outs):
            if refs[pos] is None:
                raise InterpreterError(f"{s.func} writes argument {pos + 1}, which is not an array cell")
            mem.set(*refs[pos], v)

    # tasks ---------------------------------------------------------------------------
    def _task_args(self, s: TaskCall, env, mem) -> list:
        out = []
        for a in s.args:
            if isinstance(a, ArrayRef):
                out.append(mem.ref(a.array, self.index(a, env, mem)))
            elif isinstance(a, Var) and isinstance(env.get(a.name), list):
                out.append(env[a.name])
            else:
                raise InterpreterError(f"task argument {a!r} is neither a cell nor a flat chunk")
        return out

    def _task_call(self, s: TaskCall, env, mem) -> None:
        td = self.tasks.get(s.task)
        if td is None:
            raise InterpreterError(f"unknown task {s.task!r}")
        if len(s.args) != len(td.params) or len(s.using) != len(td.using):
            raise InterpreterError(f"call of {td.name} does not match its signature")
        args = self._task_args(s, env, mem)
        using = [int(self.eval(u, env, mem)) for u in s.using]
        if self.runtime is not None and mem is self.memory:
            handles = self.runtime.submit(td.name, args + using)
            written = [a for a, tp in zip(s.args, td.params) if tp.direction != IN]
            for a, h in zip(written, handles):
                if isinstance(a, Var):
                    env[a.name] = list(h)
            return
        outs = self.run_task_body(td, args, using)
        written = [(a, tp) for a, tp in zip(s.args, td.params) if tp.direction != IN]
        for (a, tp), v in zip(written, outs):
            if isinstance(a, ArrayRef):
                mem.set(a.array, self.index(a, env, mem), v)
            else:
                env[a.name] = list(v)

    def run_task_body(self, td: TaskDef, payloads, using) -> tuple:
        """Run a task body on private copies of its parameters; returns the
        written parameters' values (lists for region parameters)."""
        env = dict(self.params)
        env.update(zip(td.using, using))
        cells: dict = {}
        layout = []
        for tp, payload in zip(td.params, payloads):
            if isinstance(tp.target, ArrayRef):
                key = (tp.target.array, self.index(tp.target, env, None))
                self.stores[key[0]].check(key[1])
                cells[key] = payload
                layout.append([key])
            else:
                _, region_cells = self.region_cells(tp.target, env)
                keys = [(tp.target.array, c) for c in region_cells]
                if len(keys) != len(payload):
                    raise InterpreterError(f"task {td.name}: {tp.target.array} region has "
                                           f"{len(keys)} cells, got {len(payload)} values")
                for k, v in zip(keys, payload):
                    cells[k] = v
                layout.append(keys)
        mem = _TaskMemory(td.name, cells)
        self.exec_block(td.body, env, mem)
        outs = []
        for tp, keys in zip(td.params, layout):
            if tp.direction == IN:
                continue
            if isinstance(tp.target, ArrayRef):
                outs.append(cells[keys[0]])
            else:
                outs.append([cells[k] for k in keys])
        return tuple(outs)

    def _register(self, td: TaskDef) -> None:
        from .runtime.engine import TaskType
        dirs = tuple(tp.direction for tp in td.params) + (IN,) * len(td.using)
        nparams = len(td.params)

        def fn(*args, _td=td):
            return self.run_task_body(_td, args[:nparams], args[nparams:])

        calls = [s for s in walk_stmts(td.body) if isinstance(s, (CallStmt, Assign))]
        init = bool(calls) and all(isinstance(s, CallStmt) and s.func in _kernels.INIT_KERNELS
                                   for s in calls)
        self.runtime.register_task(TaskType(td.name, dirs, fn, 1, init))

    # results ---------------------------------------------------------------------------
    def results(self) -> dict[str, np.ndarray]:
        """Final contents of every array (synchronizing in runtime mode)."""
        out = {}
        for name, st in self.stores.items():
            if self.runtime is None:
                out[name] = st.assemble(lambda idx: st.cells.get(idx, st.default()))
            else:
                out[name] = st.assemble(
                    lambda idx: self.runtime.wait_on(st.cells[idx]) if idx in st.cells
                    else st.default())
        return out


_MISSING = object()


def run_program(program: Program, params: Mapping[str, int], runtime=None,
                on_statement: Optional[Callable] = None) -> dict[str, np.ndarray]:
    """Interpret ``program`` and return its final arrays."""
    return Interpreter(program, params, runtime, on_statement=on_statement).run().results()


__all__ = ["Interpreter", "InterpreterError", "Chunk", "flatten_chunk", "rebuild_chunk",
           "ArrayStore", "block_matrix", "run_program"]
