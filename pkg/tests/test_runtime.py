import json
import math

import numpy as np
import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polytask.bench import BenchmarkSpec, run_benchmark
from polytask.runtime import (
    DEFAULT_COST, ZERO_OVERHEAD, CostModel, DuplicateTask, FutureHandle, Runtime, TaskFailed,
    TaskType, UnknownDataItem, UnknownTask, critical_path, export_dot, export_trace, simulate,
)


def inc(x):
    return x + 1


def make(workers=1, cores=1, scheduler="fifo", seed=0, threads=False):
    rt = Runtime(workers, cores, scheduler, seed, threads=threads)
    rt.register_task(TaskType("inc", ("inout",), inc))
    rt.register_task(TaskType("set", ("out", "in"), lambda x, v: v))
    rt.register_task(TaskType("add", ("in", "in", "out"), lambda a, b, c: a + b))
    if cores >= 2:
        rt.register_task(TaskType("wide", ("inout",), inc, computing_units=2))
    return rt


def edges(rt):
    return sorted((e.src, e.dst, e.kind) for e in rt.graph.edges)


# registration ------------------------------------------------------------------------

def test_duplicate_registration():
    rt = make()
    with pytest.raises(DuplicateTask):
        rt.register_task(TaskType("inc", ("inout",), inc))


def test_computing_units_checked():
    rt = Runtime(2, 2)
    with pytest.raises(ValueError):
        rt.register_task(TaskType("big", ("inout",), inc, computing_units=3))
    with pytest.raises(ValueError):
        rt.register_task(TaskType("none", ("inout",), inc, computing_units=0))


def test_unknown_task_and_foreign_item():
    rt, other = make(), make()
    x = rt.new_item(0)
    with pytest.raises(UnknownTask):
        rt.submit("nope", [x])
    with pytest.raises(UnknownDataItem):
        rt.submit("inc", [other.new_item(0)])
    with pytest.raises(TypeError):
        rt.submit("inc", [x, x])


def test_bad_constructor_arguments():
    with pytest.raises(ValueError):
        Runtime(0, 1)
    with pytest.raises(ValueError):
        Runtime(1, 1, "lifo")


# dependency edges ----------------------------------------------------------------------

def test_inc_chain_is_serialized():
    rt = make()
    x = rt.new_item(0)
    for _ in range(5):
        (h,) = rt.submit("inc", [x])
    assert isinstance(h, FutureHandle) and h.version == 5
    assert rt.wait_on(h) == 5
    assert edges(rt) == [(k, k + 1, kind) for k in range(4) for kind in ("RAW", "WAW")]


def test_war_and_waw_edges():
    rt = make()
    a, b, c = rt.new_item(1), rt.new_item(2), rt.new_item(0)
    rt.submit("add", [a, b, c])      # 0 reads a
    rt.submit("set", [a, 10])        # 1 overwrites a: WAR on 0
    rt.submit("set", [a, 20])        # 2: WAW on 1
    assert edges(rt) == [(0, 1, "WAR"), (1, 2, "WAW")]
    assert rt.wait_on(c) == 3 and rt.wait_on(a) == 20


def test_old_versions_stay_readable():
    rt = make()
    x = rt.new_item(0)
    (h1,) = rt.submit("inc", [x])
    (h2,) = rt.submit("inc", [x])
    assert (rt.wait_on(h1), rt.wait_on(h2)) == (1, 2)


def test_master_write_orders_after_users():
    rt = make()
    x, y = rt.new_item(1), rt.new_item(0)
    rt.submit("add", [x, x, y])
    rt.master_write(x, 100)
    rt.submit("add", [x, x, y])
    assert rt.wait_on(y) == 200
    assert ("write", x.id, (0,)) in rt.log


def test_scalars_pass_by_value_and_collections_are_tracked():
    rt = make()
    rt.register_task(TaskType("sum", ("in", "out"), lambda xs, out: sum(xs)))
    items = [rt.new_item(k) for k in range(4)]
    for it in items:
        rt.submit("inc", [it])
    out = rt.new_item(0)
    rt.submit("sum", [items, out])
    assert rt.wait_on(out) == 1 + 2 + 3 + 4
    assert {e.src for e in rt.graph.edges if e.dst == 4} == {0, 1, 2, 3}


def test_task_failure_is_reported():
    rt = make()
    rt.register_task(TaskType("boom", ("inout",), lambda x: 1 / 0))
    x = rt.new_item(0)
    rt.submit("boom", [x])
    with pytest.raises(TaskFailed) as info:
        rt.barrier()
    assert isinstance(info.value.__cause__, ZeroDivisionError)


def test_barrier_on_empty_and_twice():
    rt = make()
    rt.barrier()
    x = rt.new_item(0)
    rt.submit("inc", [x])
    rt.barrier()
    rt.barrier()
    assert rt.task_count == 1 and rt.wait_on(x) == 1
    assert [e for e in rt.log if e[0] == "barrier"] == [("barrier", 0), ("barrier", 1),
                                                         ("barrier", 1)]


# execution determinism -----------------------------------------------------------------

def _diamonds(rt, n=20):
    xs = [rt.new_item(float(k)) for k in range(n)]
    for k in range(n - 1):
        rt.submit("inc", [xs[k]])
    out = rt.new_item(0.0)
    for k in range(n - 1):
        rt.submit("add", [xs[k], xs[k + 1], out])
        rt.submit("add", [out, xs[k], xs[k + 1]])
    rt.barrier()
    return [rt.wait_on(x) for x in xs] + [rt.wait_on(out)]


@pytest.mark.parametrize("scheduler", ["fifo", "locality", "random"])
@pytest.mark.parametrize("workers", [1, 2, 4])
def test_results_independent_of_schedule(scheduler, workers):
    ref = _diamonds(make())
    assert _diamonds(make(workers, 1, scheduler, seed=workers, threads=workers > 1)) == ref


def test_replay_reproduces_final_payloads():
    run = run_benchmark(BenchmarkSpec("lu", 3, 2, "userparallel"), simulate_run=False)
    rt = run.runtime
    final = {i: it.payload for i, it in rt.items.items()}
    for seed in range(10):
        out = rt.replay(seed)
        assert all(np.array_equal(out[i], final[i]) for i in final)


# simulation ----------------------------------------------------------------------------

def _independent(T, W, C, t, name="inc"):
    rt = make(W, C)
    for _ in range(T):
        rt.submit(name, [rt.new_item(0)])
    rt.barrier()
    cost = CostModel(0.0, 0.0, 0.0, task_compute={name: lambda sizes: t})
    return rt, simulate(rt, cost=cost)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 4), st.integers(1, 3))
def test_independent_tasks_makespan(T, W, C):
    _, rep = _independent(T, W, C, 0.5)
    assert rep.makespan == math.ceil(T / (W * C)) * 0.5
    assert rep.task_count == T


def test_wide_tasks_take_several_cores():
    _, rep = _independent(4, 1, 2, 1.0, name="wide")
    assert rep.makespan == 4.0
    assert all(len(r.cores) == 2 for r in rep.schedule)


def test_fifo_is_work_conserving():
    _, rep = _independent(9, 2, 2, 1.0)
    starts = sorted(r.start for r in rep.schedule)
    assert starts == [0.0] * 4 + [1.0] * 4 + [2.0]
    # submission order is kept
    assert [r.task for r in sorted(rep.schedule, key=lambda r: (r.start, r.task))] == list(range(9))


def test_trace_slots_never_overlap():
    run = run_benchmark(BenchmarkSpec("cholesky", 4, 2, "userparallel"), workers=3,
                        scheduler="locality", simulate_run=False)
    rep = simulate(run.runtime, workers=3, cores=2)
    recs = json.loads(export_trace(rep))
    assert len(recs) == rep.task_count
    by_core = {}
    for r in recs:
        assert set(r) == {"task", "name", "worker", "cores", "startSim", "endSim"}
        for c in r["cores"]:
            by_core.setdefault((r["worker"], c), []).append((r["startSim"], r["endSim"]))
    for spans in by_core.values():
        spans.sort()
        assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))


def test_trace_respects_dependences():
    run = run_benchmark(BenchmarkSpec("qr", 3, 2, "userparallel"), simulate_run=False)
    rep = simulate(run.runtime, workers=2)
    when = {r.task: r for r in rep.schedule}
    for e in run.runtime.graph.edges:
        assert when[e.src].end <= when[e.dst].start


@pytest.mark.parametrize("scheduler", ["fifo", "locality", "random"])
def test_makespan_lower_bounds(scheduler):
    run = run_benchmark(BenchmarkSpec("lu", 4, 2, "autoparallel"), simulate_run=False)
    for W in (1, 2, 3):
        rep = simulate(run.runtime, workers=W, scheduler=scheduler, cost=ZERO_OVERHEAD)
        assert rep.makespan >= critical_path(run.runtime) * (1 - 1e-12)
        assert rep.makespan >= rep.total_work / W * (1 - 1e-12)


def test_single_worker_makespan_is_total_work():
    run = run_benchmark(BenchmarkSpec("cholesky", 3, 2, "userparallel"), simulate_run=False)
    rep = simulate(run.runtime, workers=1, cost=ZERO_OVERHEAD)
    assert rep.makespan == pytest.approx(rep.total_work, rel=1e-12)


def test_locality_moves_less_data_than_random():
    run = run_benchmark(BenchmarkSpec("cholesky", 6, 8, "userparallel"), simulate_run=False)
    loc = simulate(run.runtime, workers=4, scheduler="locality", cost=DEFAULT_COST)
    rnd = simulate(run.runtime, workers=4, scheduler="random", cost=DEFAULT_COST, seed=1)
    assert loc.transfers_bytes < rnd.transfers_bytes


def test_init_time_reported():
    run = run_benchmark(BenchmarkSpec("cholesky", 3, 2, "userparallel"))
    assert 0 < run.report.init_time < run.report.makespan
    assert run.report.comp_time == run.report.makespan - run.report.init_time


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel(per_task_overhead=-1)
    with pytest.raises(ValueError):
        CostModel(flops_per_second=0)


def test_dot_export_parses():
    rt = make()
    x = rt.new_item(0)
    for _ in range(3):
        rt.submit("inc", [x])
    (g,) = pydot.graph_from_dot_data(export_dot(rt.graph))
    assert g.get_name() == "tasks"
    assert sorted(n.get_name() for n in g.get_nodes()) == ["n0", "n1", "n2"]
    assert len(g.get_edges()) == len(rt.graph.edges)
    assert g.get_node("n1")[0].get("label") == '"inc 1"'


def _reference_edges(rt):
    """Edge set recomputed from the submit log with plain last-writer and
    readers-since-write bookkeeping."""
    writer, readers, out = {}, {}, set()
    for ev in rt.log:
        if ev[0] == "write":
            writer.pop(ev[1], None)
            readers[ev[1]] = set()
            continue
        if ev[0] != "submit":
            continue
        node = rt.graph.nodes[ev[1]]
        for iid, d, _, _ in node.args:
            if d != "out" and iid in writer:
                out.add((writer[iid], node.seq, "RAW", iid))
            if d != "in":
                if iid in writer:
                    out.add((writer[iid], node.seq, "WAW", iid))
                out |= {(r, node.seq, "WAR", iid) for r in readers.get(iid, ()) if r != node.seq}
        for iid, d, _, _ in node.args:
            if d != "out":
                readers.setdefault(iid, set()).add(node.seq)
        for iid, d, _, _ in node.args:
            if d != "in":
                writer[iid] = node.seq
                readers[iid] = set()
    return out


@pytest.mark.parametrize("app, variant", [("cholesky", "autoparallel"), ("lu", "userparallel"),
                                          ("qr", "autoparallel"), ("gemm", "userparallel-fg")])
def test_edges_match_reference_bookkeeping(app, variant):
    run = run_benchmark(BenchmarkSpec(app, 3, 2, variant), simulate_run=False)
    got = {(e.src, e.dst, e.kind, e.item) for e in run.runtime.graph.edges}
    assert got == _reference_edges(run.runtime)


def test_edges_match_reference_with_master_writes():
    rt = make()
    x, y = rt.new_item(1), rt.new_item(0)
    rt.submit("add", [x, x, y])
    rt.submit("inc", [y])
    rt.master_write(y, 5)
    rt.submit("inc", [y])
    rt.submit("add", [y, x, x])
    got = {(e.src, e.dst, e.kind, e.item) for e in rt.graph.edges}
    assert got == _reference_edges(rt)


@pytest.mark.parametrize("cores", [2, 3])
def test_results_independent_of_cores(cores):
    ref = _diamonds(make())
    assert _diamonds(make(2, cores, "random", seed=cores, threads=True)) == ref
