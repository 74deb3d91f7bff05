import json

import pytest

from polytask.bench import SOURCES
from polytask.dependence import (
    LOOP_INDEPENDENT, carried_level, compute_dependences, dependence_instances, dependence_kind,
    dependence_oracle, deps_to_json,
)
from polytask.dsl import parse
from polytask.scop import extract_scops
from scopgen import random_params, random_program


def scop_of(body, decls="param n;\narray a[n + 2];\narray b[n + 2];\n"):
    (s, _), = extract_scops(parse(decls + body)).scops
    return s


def summary(deps):
    return sorted((d.src, d.dst, d.kind, d.array, d.carried_level) for d in deps)


def test_kind_table():
    assert dependence_kind("WRITE", "READ") == "RAW"
    assert dependence_kind("READ", "WRITE") == "WAR"
    assert dependence_kind("WRITE", "WRITE") == "WAW"
    assert dependence_kind("READ", "READ") is None


def test_recurrence_is_carried_raw():
    s = scop_of("for i in 1..n {\n    a[i] = a[i - 1] + 1.0;\n}\n")
    assert summary(compute_dependences(s)) == [(1, 1, "RAW", "a", 1)]


def test_anti_dependence():
    s = scop_of("for i in 0..n {\n    a[i] = a[i + 1] * 2.0;\n}\n")
    assert summary(compute_dependences(s)) == [(1, 1, "WAR", "a", 1)]


def test_independent_statements_have_no_dependences():
    s = scop_of("for i in 0..n {\n    a[i] = 1.0;\n    b[i] = 2.0;\n}\n")
    assert compute_dependences(s) == []


def test_loop_independent_flow():
    s = scop_of("for i in 0..n {\n    a[i] = 1.0;\n    b[i] = a[i];\n}\n")
    assert summary(compute_dependences(s)) == [(1, 2, "RAW", "a", LOOP_INDEPENDENT)]


def test_repeated_write_is_carried_waw():
    s = scop_of("for i in 0..n {\n    a[0] = b[i];\n}\n")
    # every iteration overwrites a[0]
    assert summary(compute_dependences(s)) == [(1, 1, "WAW", "a", 1)]


def test_empty_parametric_relation_dropped():
    # the reads hit a[n + 1], never written
    s = scop_of("for i in 0..n {\n    a[i] = a[n + 1];\n}\n")
    assert compute_dependences(s) == []


def test_carried_level_helper_agrees():
    s = extract_scops(parse(SOURCES["cholesky"])).scops[-1][0]
    for d in compute_dependences(s):
        assert carried_level(d, s) == d.carried_level or d.carried_level == LOOP_INDEPENDENT


def test_cholesky_potrf_feeds_solve():
    s = extract_scops(parse(SOURCES["cholesky"])).scops[-1][0]
    deps = summary(compute_dependences(s))
    # ids count from the init nests: potrf is 3, solve_triangular 4, gemm 5
    assert (3, 4, "RAW", "A", LOOP_INDEPENDENT) in deps
    assert (5, 3, "RAW", "A", 1) in deps  # trailing update feeds the next potrf
    assert all(level == 1 for src, dst, _, _, level in deps if src > dst)


def test_json_export():
    s = scop_of("for i in 1..n {\n    a[i] = a[i - 1] + 1.0;\n}\n")
    (d,) = json.loads(deps_to_json(compute_dependences(s)))
    assert d["kind"] == "RAW" and d["carriedLevel"] == 1
    assert d["relation"]["space"] == ["i.src", "i.dst", "n"]
    assert all(len(row) == 5 for row in d["relation"]["matrix"])


@pytest.mark.parametrize("seed", range(60))
def test_matches_enumeration_oracle(seed):
    (s, _), = extract_scops(parse(random_program(seed))).scops
    pv = random_params(seed)
    assert dependence_instances(compute_dependences(s), s, pv) == dependence_oracle(s, pv)


@pytest.mark.parametrize("seed", range(20))
def test_oracle_pairs_respect_execution_order(seed):
    (s, _), = extract_scops(parse(random_program(seed))).scops
    pv = random_params(seed)
    for src, dst, _, _ in dependence_oracle(s, pv):
        a = s.statement(src[0]).schedule_vector(src[1])
        b = s.statement(dst[0]).schedule_vector(dst[1])
        assert a < b
