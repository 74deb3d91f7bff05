"""Discrete-event simulation of a recorded task graph on W workers x C cores.

The master's submit/sync log gates task release: a task becomes eligible
once the master has submitted it, and the master itself stalls at every
synchronization until the awaited tasks finish (plus the transfer back).
"""
from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from .engine import IN, INOUT, OUT, Runtime, TaskGraph

MASTER = -1


@dataclass(frozen=True)
class CostModel:
    per_task_overhead: float = 1e-3
    serialization_per_byte: float = 1e-9
    transfer_per_byte: float = 5e-9
    flops_per_second: float = 1e9
    # task name -> seconds as a function of the argument sizes in bytes
    task_compute: Mapping[str, Callable] = field(default_factory=dict)

    def __post_init__(self):
        for v in (self.per_task_overhead, self.serialization_per_byte, self.transfer_per_byte):
            if v < 0:
                raise ValueError("cost model entries must be non-negative")
        if self.flops_per_second <= 0:
            raise ValueError("flops_per_second must be positive")

    def compute_time(self, name: str, flops: float, sizes: list[int]) -> float:
        fn = self.task_compute.get(name)
        if fn is not None:
            return float(fn(sizes))
        return flops / self.flops_per_second

    def move_time(self, nbytes: int) -> float:
        return (self.serialization_per_byte + self.transfer_per_byte) * nbytes


DEFAULT_COST = CostModel()
ZERO_OVERHEAD = CostModel(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ScheduleRecord:
    task: int
    name: str
    worker: int
    cores: tuple[int, ...]
    start: float
    end: float


@dataclass
class ExecutionReport:
    makespan: float
    per_worker_busy: list[float]
    task_count: int
    task_count_by_type: dict[str, int]
    transfers_bytes: int
    init_time: float = 0.0
    total_work: float = 0.0  # sum over tasks of duration x computing units
    critical_path: float = 0.0
    schedule: list[ScheduleRecord] = field(default_factory=list, repr=False)

    @property
    def comp_time(self) -> float:
        return self.makespan - self.init_time


def _durations(rt: Runtime, cost: CostModel):
    """Per task: compute seconds and (item id, direction, bytes) arguments."""
    out = []
    for node in rt.graph.nodes:
        args = [(iid, d, rt.items[iid].size_bytes) for iid, d, _, _ in node.args]
        sizes = [b for _, _, b in args]
        out.append((cost.compute_time(node.name, node.flops, sizes), args))
    return out


def critical_path(rt: Runtime, cost: CostModel = ZERO_OVERHEAD) -> float:
    """Longest chain of task compute times (overheads and transfers excluded)."""
    comp = [c for c, _ in _durations(rt, cost)]
    finish = [0.0] * len(comp)
    preds = rt.graph.preds()
    for s in range(len(comp)):
        finish[s] = comp[s] + max((finish[p] for p in preds[s]), default=0.0)
    return max(finish, default=0.0)


def simulate(rt: Runtime, workers: Optional[int] = None, cores: Optional[int] = None,
             scheduler: Optional[str] = None, cost: CostModel = DEFAULT_COST,
             seed: Optional[int] = None) -> ExecutionReport:
    """Simulated execution of everything ``rt`` recorded so far."""
    W = workers or rt.workers
    C = cores or rt.cores
    policy = scheduler or rt.scheduler
    rng = random.Random(rt.seed if seed is None else seed)
    g: TaskGraph = rt.graph
    n = len(g.nodes)
    info = _durations(rt, cost)
    units = [node.units for node in g.nodes]
    if any(u > C for u in units):
        raise ValueError(f"a task needs more computing units than the {C} per worker")
    preds = g.preds()
    succ = [[] for _ in range(n)]
    for d, ps in enumerate(preds):
        for p in ps:
            succ[p].append(d)
    missing = [len(p) for p in preds]
    released = [None] * n
    start = [0.0] * n
    end = [None] * n
    location: dict[int, set] = {}  # item id -> places holding its current version
    free = [list(range(C)) for _ in range(W)]
    busy = [0.0] * W
    moved = 0
    records = []
    ready: list = []  # heap of (key, seq)
    events: list = []  # heap of (time, kind, seq); kind 0 = completion, 1 = release
    now = 0.0
    master = 0.0
    ptr = 0
    log = rt.log

    finished = [False] * n
    by_seq: dict[int, ScheduleRecord] = {}
    state = {"done": 0, "max_end": 0.0}

    def key(seq):
        return (rng.random(), seq) if policy == "random" else (seq,)

    def eligible(seq):
        if released[seq] is None or missing[seq]:
            return
        if released[seq] <= now:
            heapq.heappush(ready, (key(seq), seq))
        else:
            heapq.heappush(events, (released[seq], 1, seq))

    def item_place(iid):
        return location.setdefault(iid, {MASTER})

    def wait_for(seqs) -> Optional[float]:
        t = 0.0
        for s in seqs:
            if s is None:
                continue
            if not finished[s]:
                return None
            t = max(t, end[s])
        return t

    def advance_master():
        nonlocal ptr, master, moved
        while ptr < len(log):
            ev = log[ptr]
            if ev[0] == "submit":
                seq = ev[1]
                released[seq] = master
                eligible(seq)
            elif ev[0] == "sync":
                _, iid, producer, nbytes = ev
                t = wait_for([producer])
                if t is None:
                    return
                master = max(master, t)
                places = item_place(iid)
                if MASTER not in places:
                    master += cost.move_time(nbytes)
                    moved += nbytes
                    places.add(MASTER)
            elif ev[0] == "barrier":
                # the master is blocked here, so only tasks below ev[1] exist
                if state["done"] < ev[1]:
                    return
                master = max(master, state["max_end"])
            elif ev[0] == "write":
                _, iid, users = ev
                t = wait_for(users)
                if t is None:
                    return
                master = max(master, t)
                location[iid] = {MASTER}
            ptr += 1

    def pick_worker(seq) -> Optional[int]:
        u = units[seq]
        fits = [w for w in range(W) if len(free[w]) >= u]
        if not fits:
            return None
        if policy == "locality":
            def local_bytes(w):
                return sum(b for iid, d, b in info[seq][1]
                           if d != OUT and w in item_place(iid))
            return max(fits, key=lambda w: (local_bytes(w), -w))
        if policy == "random":
            return rng.choice(fits)
        return fits[0]

    def dispatch():
        # work-conserving: every ready task that fits some worker starts now
        nonlocal moved
        skipped = []
        while ready and any(free):
            k, seq = heapq.heappop(ready)
            w = pick_worker(seq)
            if w is None:
                skipped.append((k, seq))
                continue
            comp, args = info[seq]
            transfer = 0.0
            for iid, d, b in args:
                if d != OUT and w not in item_place(iid):
                    transfer += cost.move_time(b)
                    moved += b
            for iid, d, b in args:
                if d == IN:
                    item_place(iid).add(w)
                else:
                    location[iid] = {w}
            cs = tuple(free[w][:units[seq]])
            del free[w][:units[seq]]
            dur = cost.per_task_overhead + comp + transfer
            start[seq] = now
            end[seq] = now + dur
            busy[w] += dur * units[seq] / C
            rec = ScheduleRecord(seq, g.nodes[seq].name, w, cs, now, now + dur)
            records.append(rec)
            by_seq[seq] = rec
            heapq.heappush(events, (now + dur, 0, seq))
        for item in skipped:
            heapq.heappush(ready, item)

    advance_master()
    while True:
        dispatch()
        if not events:
            break
        now = events[0][0]
        while events and events[0][0] == now:
            _, kind, seq = heapq.heappop(events)
            if kind == 1:
                heapq.heappush(ready, (key(seq), seq))
                continue
            finished[seq] = True
            state["done"] += 1
            state["max_end"] = max(state["max_end"], end[seq])
            rec = by_seq[seq]
            free[rec.worker].extend(rec.cores)
            free[rec.worker].sort()
            for d in succ[seq]:
                missing[d] -= 1
                eligible(d)
        advance_master()
    if state["done"] != n or ptr != len(log):
        raise RuntimeError("simulation stalled with unfinished tasks")
    makespan = max([master] + [e for e in end if e is not None])
    init_ends = [end[s] for s in range(n) if g.nodes[s].init]
    total = sum((r.end - r.start) * len(r.cores) for r in records)
    records.sort(key=lambda r: (r.start, r.task))
    return ExecutionReport(
        makespan=makespan,
        per_worker_busy=busy,
        task_count=n,
        task_count_by_type=g.count_by_type(),
        transfers_bytes=moved,
        init_time=max(init_ends, default=0.0),
        total_work=total,
        critical_path=critical_path(rt, cost),
        schedule=records,
    )


def export_dot(g: TaskGraph) -> str:
    """DOT digraph: nodes labelled ``<task name> <seq>``, edges by kind."""
    lines = ["digraph tasks {"]
    for node in g.nodes:
        lines.append(f'  n{node.seq} [label="{node.name} {node.seq}"];')
    for e in g.edges:
        lines.append(f'  n{e.src} -> n{e.dst} [label="{e.kind}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_trace(report: ExecutionReport, schedule=None) -> str:
    """JSON array with one record per executed task."""
    recs = schedule if schedule is not None else report.schedule
    return json.dumps([{"task": r.task, "name": r.name, "worker": r.worker,
                        "cores": list(r.cores), "startSim": r.start, "endSim": r.end}
                       for r in recs], indent=1)
