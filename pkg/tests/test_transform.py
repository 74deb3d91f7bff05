import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polytask.bench import SOURCES
from polytask.codegen import generate_loops
from polytask.dependence import compute_dependences, statement_points
from polytask.dsl import Program, format_stmts, parse, pretty_print
from polytask.interp import Chunk, flatten_chunk, rebuild_chunk, run_program
from polytask.pipeline import PipelineOptions, parallelize
from polytask.runtime import Runtime
from polytask.scop import AccessRelation, extract_scops, fix_params
from polytask.poly import AffineExpr
from polytask.transform import (
    IllegalTiling, NoParallelismWarning, TaskifyTooDeep, detect_parallel_loops, infer_directions,
    loop_key, read_tile_sizes, shared_band, tile,
)
from scopgen import random_params, random_program


def scops(src):
    return [s for s, _ in extract_scops(parse(src)).scops]


def annotations(s):
    return detect_parallel_loops(s, compute_dependences(s))


# parallel loop detection ---------------------------------------------------------------

def test_ep_is_fully_parallel():
    (s,) = scops(SOURCES["ep"])
    assert annotations(s).parallel_levels() == [1, 2]


def test_gemm_reduction_loop_is_sequential():
    mult = scops(SOURCES["gemm"])[-1]
    ann = annotations(mult)
    st = mult.statements[0]
    assert [ann.is_parallel(loop_key(st, lvl)) for lvl in (1, 2, 3)] == [True, True, False]


def test_loop_tasks_under_a_sequential_loop_warn():
    src = "param n;\narray a[n][n];\n" \
          "for i in 1..n {\n    for j in 0..n {\n        a[i][j] = a[i - 1][j] + 1.0;\n    }\n}\n"
    with pytest.warns(NoParallelismWarning):
        out = parallelize(src, PipelineOptions(None, 1)).source
    assert "parallel for\nfor i" not in out


# tiling --------------------------------------------------------------------------------

def test_tile_non_dividing_extent():
    (s,) = scops("array a[10];\nfor i in 0..10 {\n    a[i] = 1.0;\n}\n")
    assert format_stmts(generate_loops(tile(s, [3]))) == (
        "for i_t in 0..4 {\n"
        "    for i in max(3 * i_t, 0)..min(3 * i_t + 3, 10) {\n"
        "        a[i] = 1.0;\n"
        "    }\n"
        "}")


def test_tile_names_avoid_collisions():
    (s,) = scops("param i_t;\narray a[10];\nfor i in 0..10 {\n    a[i] = 1.0;\n}\n")
    t = tile(s, [4])
    assert t.statements[0].iterators[0] not in ("i_t", "i")


SKEW = "param n;\narray a[n + 2][n + 2];\n" \
       "for i in 1..n {\n    for j in 0..n {\n        a[i][j] = a[i - 1][j + 1];\n    }\n}\n"


def test_negative_component_is_illegal():
    (s,) = scops(SKEW)
    tile(s, [2])  # the outer loop alone is fine
    with pytest.raises(IllegalTiling) as info:
        tile(s, [2, 2])
    assert info.value.level == 2


def test_tile_size_validation():
    (s,) = scops(SOURCES["ep"])
    with pytest.raises(ValueError):
        tile(s, [0, 2])
    with pytest.raises(ValueError):
        tile(s, [2, 2, 2])


def test_read_tile_sizes():
    assert read_tile_sizes("4\n\n8\n") == (4, 8)
    with pytest.raises(ValueError, match="line 2"):
        read_tile_sizes("4\nx\n")
    with pytest.raises(ValueError):
        read_tile_sizes("0\n")


@pytest.mark.parametrize("seed", range(40))
def test_tiled_code_computes_the_same(seed):
    src = random_program(2000 + seed)
    prog = parse(src)
    pv = random_params(2000 + seed)
    (s, _), = extract_scops(prog).scops
    s = fix_params(s, pv)
    rng = random.Random(seed)
    sizes = [rng.randint(1, 7) for _ in range(shared_band(s))]
    try:
        t = tile(s, sizes)
    except IllegalTiling:
        return
    for a, b in zip(s.statements, t.statements):
        band = len(sizes)
        assert Counter(statement_points(a, pv)) == Counter(p[band:] for p in statement_points(b, pv))
    ref = run_program(prog, pv)
    got = run_program(Program(prog.params, prog.arrays, (), generate_loops(t)), pv)
    assert all(np.array_equal(ref[k], got[k]) for k in ref)


# directions ----------------------------------------------------------------------------

def _acc(array, kind, *subs):
    return AccessRelation(array, tuple(AffineExpr.var(x) for x in subs), kind)


def test_infer_directions():
    accs = [_acc("a", "READ", "i"), _acc("b", "READ", "i"), _acc("b", "WRITE", "i"),
            _acc("c", "WRITE", "i")]
    dirs = [d for _, d in infer_directions(accs)]
    assert dirs == ["in", "inout", "out"]
    # an inexact write must keep the old contents alive
    assert [d for _, d in infer_directions(accs, exact_writes=set())] == ["in", "inout", "inout"]


# taskification -------------------------------------------------------------------------

def test_ep_statement_tasks():
    out = parallelize(SOURCES["ep"], PipelineOptions(None, 0)).source
    assert "task S1_task(in a[i][j], in b[i][j], out c[i][j]) using (i, j) {" in out
    assert out.rstrip().endswith("barrier;")


def test_ep_loop_tasks():
    out = parallelize(SOURCES["ep"], PipelineOptions(None, 1)).source
    assert "task S1_task_lt(in a[i..i + 1][0..n_size], in b[i..i + 1][0..n_size], " \
           "out c[i..i + 1][0..n_size]) using (i) {" in out
    for piece in ("chunk c_chunk1 = c[i..i + 1][0..n_size];", "flatten c_flat1 = c_chunk1;",
                  "rebuild c_chunk1 = c_flat1;", "writeback c[i..i + 1][0..n_size] = c_chunk1;"):
        assert piece in out


def test_generated_program_reparses():
    for level in (0, 1, 2):
        out = parallelize(SOURCES["ep"], PipelineOptions(None, level)).source
        assert pretty_print(parse(out)) == out


def test_tiled_gemm_task_directions():
    out = parallelize(SOURCES["gemm"], PipelineOptions((2, 2, 2), 3)).source
    lines = [l for l in out.splitlines() if l.startswith("task S") and "_lt(" in l]
    assert any("inout C[" in l and "in A[" in l and "in B[" in l for l in lines)


def test_taskify_too_deep():
    with pytest.raises(TaskifyTooDeep):
        parallelize(SOURCES["ep"], PipelineOptions(None, 3))


def test_one_barrier_per_nest():
    out = parallelize(SOURCES["cholesky"]).source
    assert out.count("barrier;") == len(scops(SOURCES["cholesky"]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=3).flatmap(
    lambda shape: st.tuples(st.just(tuple(shape)),
                            st.lists(st.floats(allow_nan=False), min_size=int(np.prod(shape)),
                                     max_size=int(np.prod(shape))))))
def test_chunk_flatten_rebuild_bijection(case):
    shape, elements = case
    c = Chunk(shape, elements)
    assert rebuild_chunk(flatten_chunk(c), shape) == c


def test_chunk_shape_checked():
    with pytest.raises(ValueError):
        Chunk((2, 2), [1.0, 2.0, 3.0])


@pytest.mark.filterwarnings("ignore::polytask.transform.NoParallelismWarning")
@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("level", [0, 1, 2])
def test_taskified_random_nests_match_sequential(seed, level):
    src = random_program(3000 + seed)
    pv = random_params(3000 + seed)
    depth = max(s.max_depth for s in scops(src))
    if level > depth:
        pytest.skip("nest shallower than the level")
    gen = parallelize(src, PipelineOptions(None, level)).generated.program
    instances = []
    ref = run_program(parse(src), pv, on_statement=lambda s, env: instances.append(s))
    local = run_program(gen, pv)
    rt = Runtime(2, 1, "random", seed, threads=False)
    remote = run_program(gen, pv, runtime=rt)
    for k in ref:
        assert np.array_equal(ref[k], local[k])
        assert np.array_equal(ref[k], remote[k])
    if level == 0:
        assert rt.task_count == len(instances)
