import random

import pytest

from polytask.poly import (
    AffineExpr, BoxTooLarge, Polyhedron, enumerate_points, eq, find_integer_point, fm_eliminate,
    ge, is_empty_rational, le, project_onto,
)

i, j, k, n = (AffineExpr.var(v) for v in "ijkn")


def tri(upper=3):
    return Polyhedron(("i", "j"), (ge(i, 0), ge(j, i), le(j, upper)))


def test_eliminate_j_from_triangle():
    p = fm_eliminate(tri(), "j")
    assert p.space == ("i",)
    pts = enumerate_points(p, {"i": (-10, 10)})
    assert pts == [(0,), (1,), (2,), (3,)]


def test_eliminate_contradiction_is_empty():
    p = Polyhedron(("i",), (ge(i, 0), le(i, -1)))
    q = fm_eliminate(p, "i")
    assert q.space == ()
    assert is_empty_rational(q)


def test_rational_emptiness_examples():
    assert is_empty_rational(Polyhedron(("i",), (ge(i, 0), le(i, 5), ge(i, 7))))
    assert not is_empty_rational(Polyhedron.universe(("i", "j")))


def test_enumerate_examples():
    assert enumerate_points(Polyhedron(("i",), (ge(i, 0), le(i, 2))), {"i": (-5, 5)}) == [
        (0,), (1,), (2,)]
    empty = Polyhedron(("i",), (ge(i, 1), le(i, 0)))
    assert enumerate_points(empty, {"i": (-5, 5)}) == []
    assert enumerate_points(tri(2), {"i": (0, 2), "j": (0, 2)}) == [
        (0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def test_box_too_large():
    with pytest.raises(BoxTooLarge):
        enumerate_points(tri(), {"i": (0, 10**4), "j": (0, 10**4)}, cap=10**6)


def test_exact_arithmetic_no_overflow():
    big = 10**40
    p = Polyhedron(("i", "j"), (ge(i * big, j), ge(j, 1), le(j * big, i * (big * big)),
                                le(i, 3)))
    q = fm_eliminate(p, "j")
    assert enumerate_points(q, {"i": (-5, 5)}) == [(1,), (2,), (3,)]


def test_integer_search_sees_through_rational_points():
    # 2i = 1 has a rational solution but no integer one
    p = Polyhedron(("i",), (eq(i * 2, 1),))
    assert not is_empty_rational(p)
    assert find_integer_point(p) is None


def _random_poly(rng: random.Random, nvars: int) -> Polyhedron:
    names = ("a", "b", "c", "d")[:nvars]
    cons = []
    for v in names:
        x = AffineExpr.var(v)
        cons += [ge(x, rng.randint(0, 4)), le(x, rng.randint(4, 8))]
    for _ in range(rng.randint(1, 4)):
        e = AffineExpr({v: rng.randint(-3, 3) for v in names}, rng.randint(-8, 8))
        cons.append(ge(e, 0) if rng.random() < 0.85 else eq(e, 0))
    return Polyhedron(names, tuple(cons))


@pytest.mark.parametrize("seed", range(100))
def test_projection_soundness_and_emptiness_one_sided(seed):
    rng = random.Random(seed)
    p = _random_poly(rng, rng.randint(1, 4))
    box = {v: (0, 8) for v in p.space}
    pts = enumerate_points(p, box)
    assert pts == sorted(set(pts))  # lexicographic, duplicate-free
    if is_empty_rational(p):
        assert pts == []
    v = rng.choice(p.space)
    q = fm_eliminate(p, v)
    k = p.space.index(v)
    dropped = {pt[:k] + pt[k + 1:] for pt in pts}
    qbox = {x: (0, 8) for x in q.space}
    assert dropped <= set(enumerate_points(q, qbox))


def test_project_onto_keeps_order():
    p = Polyhedron(("i", "j", "n"), (ge(i, 0), ge(j, i), le(j, n)))
    q = project_onto(p, ["n"])
    assert q.space == ("n",)
    assert enumerate_points(q, {"n": (-3, 3)}) == [(0,), (1,), (2,), (3,)]
