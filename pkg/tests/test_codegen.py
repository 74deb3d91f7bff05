import dataclasses

import pytest

from polytask.bench import SOURCES
from polytask.codegen import UnscannableDomain, bounds_from_constraints, generate_loops
from polytask.dsl import Program, format_expr, format_stmts, parse
from polytask.interp import run_program
from polytask.pipeline import PipelineOptions, parallelize
from polytask.poly import AffineExpr, ge, le
from polytask.scop import extract_scops
from scopgen import random_params, random_program

i, j, n = (AffineExpr.var(v) for v in "ijn")


def visit_order(prog, params):
    order = []
    run_program(prog, params, on_statement=lambda s, env: order.append(
        (s, tuple(sorted(env.items())))))
    return order


@pytest.mark.parametrize("seed", range(60))
def test_regenerated_nest_visits_in_original_order(seed):
    prog = parse(random_program(seed))
    pv = random_params(seed)
    (s, _), = extract_scops(prog).scops
    regen = Program(prog.params, prog.arrays, (), generate_loops(s))
    assert visit_order(regen, pv) == visit_order(prog, pv)


@pytest.mark.parametrize("name", ["cholesky", "lu", "qr", "gemm"])
def test_bundled_nests_regenerate_verbatim(name):
    prog = parse(SOURCES[name])
    for s, index in extract_scops(prog).scops:
        assert generate_loops(s) == (prog.body[index],)


@pytest.mark.filterwarnings("ignore::polytask.transform.NoParallelismWarning")
def test_generation_is_deterministic():
    a = parallelize(SOURCES["qr"], PipelineOptions((2, 2), 2)).generated
    b = parallelize(parse(SOURCES["qr"]), PipelineOptions((2, 2), 2)).generated
    assert a.source == b.source and a.task_registry == b.task_registry


def test_bounds_combine_with_min_and_max():
    lo, hi = bounds_from_constraints([ge(j, 0), ge(j, i), le(j, n - 1), le(j, 7)], "j",
                                     ["n", "i"])
    assert format_expr(lo) == "max(i, 0)"
    assert format_expr(hi) == "min(n, 8)"


def test_missing_bound_is_unscannable():
    with pytest.raises(UnscannableDomain) as info:
        bounds_from_constraints([ge(j, 0)], "j", ["n"], level=2)
    assert info.value.level == 2


def test_non_identity_scattering_is_unscannable():
    (s, _), = extract_scops(parse(SOURCES["ep"])).scops
    st = s.statements[0]
    bad = dataclasses.replace(st, schedule=(st.schedule[0], j) + st.schedule[2:])
    with pytest.raises(UnscannableDomain):
        generate_loops(dataclasses.replace(s, statements=(bad,)))


def test_provenance_spans_cover_generated_lines():
    gen = parallelize(SOURCES["cholesky"]).generated
    lines = gen.source.splitlines()
    for origin, (first, last) in gen.provenance:
        assert 1 <= first <= last <= len(lines)
    assert [o for o, _ in gen.provenance if o is not None] == [0, 1, 2]


def test_task_registry_lists_directions():
    gen = parallelize(SOURCES["ep"]).generated
    assert gen.task_registry == (("S1_task", (("in", "a[i][j]"), ("in", "b[i][j]"),
                                              ("out", "c[i][j]"))),)


def test_format_stmts_indents_nested_loops():
    (s, _), = extract_scops(parse(SOURCES["ep"])).scops
    text = format_stmts(generate_loops(s))
    assert text.splitlines()[1].startswith("    for j in 0..n_size {")
