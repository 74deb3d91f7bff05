"""Task graph construction, futures and real execution of task bodies.

The master thread registers task types, creates data items and submits
tasks. Dependencies are detected per data item from the last writer and the
readers since that write. Task bodies run only when the master synchronizes
(``wait_on``/``barrier``), on a thread pool of ``workers * cores`` slots or
inline; simulated time is computed separately by :mod:`.simulate`.
"""
from __future__ import annotations

import itertools
import logging
import random
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .. import kernels as _kernels

log = logging.getLogger(__name__)

IN, OUT, INOUT = "in", "out", "inout"
RAW, WAR, WAW = "RAW", "WAR", "WAW"
PENDING, READY, RUNNING, DONE = "PENDING", "READY", "RUNNING", "DONE"
SCHEDULERS = ("fifo", "locality", "random")


class RuntimeError_(Exception):
    pass


class DuplicateTask(RuntimeError_):
    pass


class UnknownTask(RuntimeError_):
    pass


class UnknownDataItem(RuntimeError_):
    pass


class DeadlockDetected(RuntimeError_):
    pass


class TaskFailed(RuntimeError_):
    def __init__(self, task: "TaskInstance", exc: BaseException):
        super().__init__(f"task {task.name}#{task.seq} failed: {exc!r}")
        self.task = task
        self.__cause__ = exc


def _nbytes(payload) -> int:
    if isinstance(payload, np.ndarray):
        return int(payload.nbytes)
    return 8


class DataItem:
    """A runtime-managed value. Identity, not payload equality, drives
    dependency detection; every write creates a new version."""

    __slots__ = ("id", "version", "history", "size_bytes", "label")

    def __init__(self, id: int, payload, label: str = ""):
        self.id = id
        self.version = 0
        self.history = {0: payload}
        self.size_bytes = _nbytes(payload)
        self.label = label

    @property
    def payload(self):
        return self.history.get(self.version)

    def __repr__(self) -> str:
        return f"DataItem({self.id}, v{self.version}{', ' + self.label if self.label else ''})"


@dataclass(frozen=True)
class FutureHandle:
    item: DataItem
    version: int

    @property
    def id(self) -> int:
        return self.item.id


@dataclass(frozen=True)
class TaskType:
    name: str
    directions: tuple[str, ...]  # one per positional argument; untracked args are passed by value
    fn: Callable
    computing_units: int = 1
    init: bool = False  # data initialization (reported as INIT_TIME)


@dataclass
class TaskInstance:
    seq: int
    name: str
    args: list  # (item id, direction, in version, out version) for tracked arguments
    raw_args: list
    units: int
    state: str = PENDING
    flops: float = 0.0
    init: bool = False


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str
    item: int


@dataclass
class TaskGraph:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def preds(self) -> list[set]:
        out = [set() for _ in self.nodes]
        for e in self.edges:
            out[e.dst].add(e.src)
        return out

    def count_by_type(self) -> dict[str, int]:
        out: dict = {}
        for n in self.nodes:
            out[n.name] = out.get(n.name, 0) + 1
        return dict(sorted(out.items()))


def _tracked(a) -> bool:
    return isinstance(a, (DataItem, FutureHandle))


def _item_of(a) -> DataItem:
    return a.item if isinstance(a, FutureHandle) else a


class Runtime:
    """Single-master task runtime.

    ``execute=False`` builds the graph without running kernels for real:
    task bodies run inline under :func:`polytask.kernels.dry_run`, which only
    counts flops, so graph-only runs stay cheap at large sizes.
    """

    def __init__(self, workers: int = 1, cores: int = 1, scheduler: str = "fifo",
                 seed: int = 0, execute: bool = True, threads: Optional[bool] = None):
        if workers < 1 or cores < 1:
            raise ValueError("workers and cores must be >= 1")
        if scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {scheduler!r}")
        self.workers = workers
        self.cores = cores
        self.scheduler = scheduler
        self.seed = seed
        self.execute = execute
        self.threads = (workers * cores > 1) if threads is None else threads
        self.task_types: dict[str, TaskType] = {}
        self.graph = TaskGraph()
        self.items: dict[int, DataItem] = {}
        self.log: list = []  # master-side events replayed by the simulator
        self._ids = itertools.count()
        self._last_writer: dict[int, int] = {}
        self._readers: dict[int, list[int]] = {}
        self._pending: list[int] = []
        self._producers: dict[tuple[int, int], int] = {}
        self._rng = random.Random(seed)

    # registration and data --------------------------------------------------------
    def register_task(self, tt: TaskType) -> None:
        if tt.name in self.task_types:
            raise DuplicateTask(tt.name)
        if tt.computing_units < 1:
            raise ValueError("computing_units must be >= 1")
        if tt.computing_units > self.cores:
            raise ValueError(f"task {tt.name} needs {tt.computing_units} units; "
                             f"workers have {self.cores}")
        self.task_types[tt.name] = tt

    def register_kernels(self, names: Optional[Sequence[str]] = None) -> None:
        for k in _kernels.KERNELS.values():
            if (names is None or k.name in names) and k.name not in self.task_types:
                self.register_task(TaskType(k.name, k.directions, k, 1, k.init))

    def new_item(self, payload, label: str = "") -> DataItem:
        item = DataItem(next(self._ids), payload, label)
        self.items[item.id] = item
        return item

    # submission ------------------------------------------------------------------
    def submit(self, name: str, args: Sequence[Any]):
        """Submit a task; returns one FutureHandle per written argument (a list
        of handles for collection arguments), in argument order."""
        tt = self.task_types.get(name)
        if tt is None:
            raise UnknownTask(name)
        if len(args) != len(tt.directions):
            raise TypeError(f"task {name} takes {len(tt.directions)} arguments, got {len(args)}")
        seq = len(self.graph.nodes)
        tracked = []
        for a, d in zip(args, tt.directions):
            for x in (a if isinstance(a, (list, tuple)) else [a]):
                if _tracked(x):
                    item = _item_of(x)
                    if self.items.get(item.id) is not item:
                        raise UnknownDataItem(repr(item))
                    tracked.append((item, d))
        edges = set()
        for item, d in tracked:
            w = self._last_writer.get(item.id)
            if d in (IN, INOUT) and w is not None:
                edges.add(Edge(w, seq, RAW, item.id))
            if d in (OUT, INOUT):
                if w is not None:
                    edges.add(Edge(w, seq, WAW, item.id))
                for r in self._readers.get(item.id, ()):
                    if r != seq:
                        edges.add(Edge(r, seq, WAR, item.id))
        in_versions = {item.id: item.version for item, _ in tracked}
        out_versions = {}
        for item, d in tracked:
            if d in (IN, INOUT):
                readers = self._readers.setdefault(item.id, [])
                if not readers or readers[-1] != seq:
                    readers.append(seq)
        for item, d in tracked:
            if d in (OUT, INOUT) and item.id not in out_versions:
                item.version += 1
                out_versions[item.id] = item.version
                self._producers[(item.id, item.version)] = seq
                self._last_writer[item.id] = seq
                self._readers[item.id] = []
        node = TaskInstance(seq, name,
                            [(item.id, d, in_versions[item.id], out_versions.get(item.id))
                             for item, d in tracked],
                            list(args), tt.computing_units, init=tt.init)
        self.graph.nodes.append(node)
        self.graph.edges.extend(sorted(edges, key=lambda e: (e.src, e.kind, e.item)))
        self._pending.append(seq)
        self.log.append(("submit", seq))
        out = []
        for a, d in zip(args, tt.directions):
            if d == IN:
                continue
            if isinstance(a, (list, tuple)):
                out.append([FutureHandle(_item_of(x), out_versions[_item_of(x).id])
                            if _tracked(x) else x for x in a])
            elif _tracked(a):
                out.append(FutureHandle(_item_of(a), out_versions[_item_of(a).id]))
        return tuple(out)

    # synchronization ---------------------------------------------------------------
    def wait_on(self, x):
        """Payload of a DataItem, FutureHandle or list of them, after running
        every pending task."""
        if isinstance(x, (list, tuple)):
            return [self.wait_on(v) for v in x]
        if not _tracked(x):
            return x
        item = _item_of(x)
        version = x.version if isinstance(x, FutureHandle) else item.version
        self._flush()
        producer = self._producer(item, version)
        self.log.append(("sync", item.id, producer, item.size_bytes))
        return item.history[version]

    def barrier(self) -> None:
        self._flush()
        self.log.append(("barrier", len(self.graph.nodes)))

    def master_write(self, x, payload) -> None:
        """Overwrite an item from master code (after syncing its users)."""
        item = _item_of(x)
        self._flush()
        users = [s for s in [self._last_writer.get(item.id)] + self._readers.get(item.id, [])
                 if s is not None]
        item.version += 1
        item.history[item.version] = payload
        item.size_bytes = _nbytes(payload)
        self._last_writer.pop(item.id, None)
        self._readers[item.id] = []
        self.log.append(("write", item.id, tuple(users)))

    def _producer(self, item: DataItem, version: int) -> Optional[int]:
        return self._producers.get((item.id, version))

    # execution ---------------------------------------------------------------------
    def _run_task(self, node: TaskInstance, history_of=None):
        history_of = history_of or (lambda item: item.history)
        tt = self.task_types[node.name]
        versions = {iid: v for iid, _, v, _ in node.args}

        def resolve(a):
            if isinstance(a, (list, tuple)):
                return [resolve(v) for v in a]
            if _tracked(a):
                item = _item_of(a)
                return history_of(item)[versions[item.id]]
            return a

        payloads = [resolve(a) for a in node.raw_args]
        _kernels.take_flops()
        if self.execute:
            outs = tt.fn(*payloads)
        else:
            with _kernels.dry_run():
                outs = tt.fn(*payloads)
        flops = _kernels.take_flops()
        outs = outs if isinstance(outs, tuple) else (outs,)
        written = [(a, d) for a, d in zip(node.raw_args, tt.directions) if d != IN]
        results = {}
        k = 0
        for a, d in written:
            if isinstance(a, (list, tuple)):
                vals = outs[k]
                for x, v in zip(a, vals):
                    if _tracked(x):
                        results[_item_of(x).id] = v
                k += 1
            elif _tracked(a):
                results[_item_of(a).id] = outs[k]
                k += 1
        return results, flops

    def _store(self, node: TaskInstance, results: dict, flops: float, history_of=None):
        history_of = history_of or (lambda item: item.history)
        out_versions = {iid: v for iid, _, _, v in node.args if v is not None}
        for iid, v in out_versions.items():
            item = self.items[iid]
            payload = results.get(iid, history_of(item).get(v - 1))
            history_of(item)[v] = payload
        node.flops = flops
        node.state = DONE

    def _order_key(self):
        if self.scheduler == "random":
            return lambda seq: self._rng.random()
        return lambda seq: seq

    def _flush(self) -> None:
        pending = [s for s in self._pending if self.graph.nodes[s].state != DONE]
        self._pending = []
        if not pending:
            return
        if not self.threads or not self.execute:
            self._execute_inline(pending)
        else:
            self._execute_threaded(pending)

    def _dependents(self, pending):
        pset = set(pending)
        remaining = {s: 0 for s in pending}
        succ: dict = {s: [] for s in pending}
        seen = set()
        for e in self.graph.edges:
            if e.dst in pset and (e.src, e.dst) not in seen:
                seen.add((e.src, e.dst))
                if self.graph.nodes[e.src].state != DONE:
                    remaining[e.dst] += 1
                    succ[e.src].append(e.dst)
        return remaining, succ

    def _execute_inline(self, pending) -> None:
        if self.scheduler != "random":
            for s in pending:  # submission order is a topological order
                node = self.graph.nodes[s]
                node.state = RUNNING
                try:
                    results, flops = self._run_task(node)
                except Exception as exc:
                    raise TaskFailed(node, exc) from exc
                self._store(node, results, flops)
            return
        remaining, succ = self._dependents(pending)
        ready = [s for s in pending if remaining[s] == 0]
        while ready:
            k = self._rng.randrange(len(ready))
            ready[k], ready[-1] = ready[-1], ready[k]
            s = ready.pop()
            node = self.graph.nodes[s]
            try:
                results, flops = self._run_task(node)
            except Exception as exc:
                raise TaskFailed(node, exc) from exc
            self._store(node, results, flops)
            for t in succ[s]:
                remaining[t] -= 1
                if remaining[t] == 0:
                    ready.append(t)
        if any(self.graph.nodes[s].state != DONE for s in pending):
            raise DeadlockDetected("pending tasks could not run")

    def _execute_threaded(self, pending) -> None:
        remaining, succ = self._dependents(pending)
        key = self._order_key()
        ready = sorted((s for s in pending if remaining[s] == 0), key=key)
        slots = self.workers * self.cores
        running = {}
        with ThreadPoolExecutor(max_workers=slots) as pool:
            while ready or running:
                while ready and len(running) < slots:
                    s = ready.pop(0)
                    node = self.graph.nodes[s]
                    node.state = RUNNING
                    running[pool.submit(self._run_task, node)] = s
                if not running:
                    break
                done, _ = wait(list(running), return_when=FIRST_COMPLETED)
                newly = []
                for f in done:
                    s = running.pop(f)
                    node = self.graph.nodes[s]
                    try:
                        results, flops = f.result()
                    except Exception as exc:
                        raise TaskFailed(node, exc) from exc
                    self._store(node, results, flops)
                    for t in succ[s]:
                        remaining[t] -= 1
                        if remaining[t] == 0:
                            newly.append(t)
                ready = sorted(ready + newly, key=key) if self.scheduler != "random" else ready + \
                    sorted(newly, key=key)
        if any(self.graph.nodes[s].state != DONE for s in pending):
            raise DeadlockDetected("pending tasks could not run")

    def replay(self, seed: int) -> dict[int, Any]:
        """Re-execute the whole graph from the initial payloads in a random
        topological order; returns the final payload of every item."""
        rng = random.Random(seed)
        # initial payloads and master writes are fixed; task outputs are recomputed
        histories = {iid: {v: p for v, p in item.history.items()
                           if (iid, v) not in self._producers}
                     for iid, item in self.items.items()}
        history_of = lambda item: histories[item.id]
        n = len(self.graph.nodes)
        remaining = [0] * n
        succ = [[] for _ in range(n)]
        for src, dst in {(e.src, e.dst) for e in self.graph.edges}:
            remaining[dst] += 1
            succ[src].append(dst)
        ready = [s for s in range(n) if remaining[s] == 0]
        while ready:
            k = rng.randrange(len(ready))
            ready[k], ready[-1] = ready[-1], ready[k]
            s = ready.pop()
            node = self.graph.nodes[s]
            results, flops = self._run_task(node, history_of)
            out_versions = {iid: v for iid, _, _, v in node.args if v is not None}
            for iid, v in out_versions.items():
                histories[iid][v] = results.get(iid, histories[iid].get(v - 1))
            for t in succ[s]:
                remaining[t] -= 1
                if remaining[t] == 0:
                    ready.append(t)
        return {iid: histories[iid].get(self.items[iid].version) for iid in self.items}

    # reporting ---------------------------------------------------------------------
    @property
    def task_count(self) -> int:
        return len(self.graph.nodes)

    def count_tasks(self) -> dict[str, int]:
        return self.graph.count_by_type()
