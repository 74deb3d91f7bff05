import pytest

from polytask.bench import SOURCES
from polytask.dependence import statement_points
from polytask.dsl import parse
from polytask.interp import run_program
from polytask.openscop import DimensionMismatch, FormatError, read_openscop, write_openscop
from polytask.poly import AffineExpr
from polytask.scop import extract_scops
from scopgen import random_params, random_program

i, j, k = (AffineExpr.var(v) for v in "ijk")


def only_scop(src):
    (s, _), = extract_scops(parse(src)).scops
    return s


def test_ep_single_statement():
    s = only_scop(SOURCES["ep"])
    (st,) = s.statements
    assert s.params == ("n_size",)
    assert st.iterators == ("i", "j")
    assert st.schedule == (AffineExpr.const(0), i, AffineExpr.const(0), j, AffineExpr.const(0))
    assert [(a.array, a.kind) for a in st.accesses] == [
        ("a", "READ"), ("b", "READ"), ("c", "WRITE")]
    assert statement_points(st, {"n_size": 2}) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_non_affine_subscript_is_residual():
    src = "param n;\narray a[n];\nfor i in 0..n {\n    a[i * i] = 1.0;\n}\n" \
          "for i in 0..n {\n    a[i] = 2.0;\n}\n"
    ex = extract_scops(parse(src))
    assert [idx for _, idx in ex.residual] == [0]
    assert [idx for _, idx in ex.scops] == [1]


def test_gemm_multiply_relations():
    ex = extract_scops(parse(SOURCES["gemm"]))
    mult = [st for s, _ in ex.scops for st in s.statements if st.depth == 3]
    (st,) = mult
    subs = {(a.array, a.kind): a.subscripts for a in st.accesses}
    assert subs[("A", "READ")] == (i, k)
    assert subs[("B", "READ")] == (k, j)
    assert subs[("C", "WRITE")] == (i, j)
    assert subs[("C", "READ")] == (i, j)  # multiply accumulates into C


def test_openscop_rows():
    text = write_openscop(only_scop(SOURCES["ep"]))
    lines = text.splitlines()
    d = lines.index("DOMAIN")
    assert lines[d + 1].split() == ["4", "5", "2", "0", "0", "1"]
    assert lines[d + 4].split() == ["1", "-1", "0", "1", "-1"]  # -i + n - 1 >= 0
    assert "SCATTERING" in lines and lines.count("READ") == 2 and lines.count("WRITE") == 1


@pytest.mark.parametrize("name", sorted(SOURCES))
def test_openscop_round_trip(name):
    for s, _ in extract_scops(parse(SOURCES[name])).scops:
        text = write_openscop(s)
        assert read_openscop(text) == s
        assert write_openscop(read_openscop(text)) == text


@pytest.mark.parametrize("seed", range(30))
def test_openscop_round_trip_random(seed):
    s = only_scop(random_program(seed))
    assert read_openscop(write_openscop(s)) == s


def test_openscop_rejects_truncated_input():
    text = write_openscop(only_scop(SOURCES["ep"]))
    with pytest.raises(FormatError):
        read_openscop(text[: len(text) // 2])


def test_openscop_dimension_mismatch():
    text = write_openscop(only_scop(SOURCES["ep"]))
    bad = text.replace("4 5 2 0 0 1", "4 6 2 0 0 1", 1)
    with pytest.raises(DimensionMismatch) as info:
        read_openscop(bad)
    assert info.value.line > 0


def _observed(src, params):
    """Per statement body: the instances the interpreter actually executed,
    in execution order."""
    prog = parse(src)
    (s, _), = extract_scops(prog).scops
    seen = []
    by_body = {id(st.body): st for st in s.statements}

    def hook(stmt, env):
        st = by_body[id(stmt)]
        seen.append((st, tuple(env[v] for v in st.iterators)))
    run_program(prog, params, on_statement=hook)
    return s, seen


@pytest.mark.parametrize("seed", range(40))
def test_domains_match_interpreter(seed):
    s, seen = _observed(random_program(seed), random_params(seed))
    pv = random_params(seed)
    for st in s.statements:
        assert sorted(p for t, p in seen if t is st) == statement_points(st, pv)


@pytest.mark.parametrize("seed", range(40))
def test_scattering_orders_like_interpreter(seed):
    s, seen = _observed(random_program(seed), random_params(seed))
    stamps = [st.schedule_vector(p) for st, p in seen]
    assert stamps == sorted(stamps)
    assert len(set(stamps)) == len(stamps)
