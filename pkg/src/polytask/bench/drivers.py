"""Hand-taskified (userparallel) versions of the applications.

Each driver creates the block data items on the master, submits kernel
tasks in the order the algorithm prescribes and returns a callable that
gathers the final arrays in the same layout the interpreter produces.
"""
from __future__ import annotations

import numpy as np

from ..interp import block_matrix


def _blocks(rt, name, m, b, cells):
    return {c: rt.new_item(np.zeros((b, b)), f"{name}[{c[0]}][{c[1]}]") for c in cells}


def _gather(rt, items, shape, b):
    out = np.zeros(shape + (b, b))
    for idx, item in items.items():
        out[idx] = rt.wait_on(item)
    return out


def cholesky(rt, m: int, b: int):
    """Right-looking blocked Cholesky of an SPD matrix; L overwrites the
    lower block triangle."""
    lower = [(i, j) for i in range(m) for j in range(i + 1)]
    A = _blocks(rt, "A", m, b, lower)
    for i, j in lower:
        rt.submit("fill_spd", [A[i, j], 42, 0, i, j, m])
    for k in range(m):
        rt.submit("potrf", [A[k, k]])
        for i in range(k + 1, m):
            rt.submit("solve_triangular", [A[k, k], A[i, k]])
        for i in range(k + 1, m):
            for j in range(k + 1, i + 1):
                rt.submit("gemm", [A[i, k], A[j, k], A[i, j]])
    rt.barrier()
    return lambda: {"A": _gather(rt, A, (m, m), b)}


def lu(rt, m: int, b: int):
    """Blocked LU without pivoting; L (unit diagonal) and U share A."""
    A = _blocks(rt, "A", m, b, [(i, j) for i in range(m) for j in range(m)])
    for i in range(m):
        for j in range(m):
            rt.submit("fill_diagdom", [A[i, j], 42, 0, i, j, m])
    for k in range(m):
        rt.submit("custom_lu", [A[k, k]])
        for j in range(k + 1, m):
            rt.submit("trsm_lower", [A[k, k], A[k, j]])
        for i in range(k + 1, m):
            rt.submit("trsm_upper", [A[k, k], A[i, k]])
            for j in range(k + 1, m):
                rt.submit("dgemm", [A[i, k], A[k, j], A[i, j]])
    rt.barrier()
    return lambda: {"A": _gather(rt, A, (m, m), b)}


def qr(rt, m: int, b: int):
    """Blocked QR: the diagonal block is factored, then every block below it
    is annihilated against it with an orthogonal 2b x 2b transform."""
    A = _blocks(rt, "A", m, b, [(i, j) for i in range(m) for j in range(m)])
    Qd = {(k,): rt.new_item(np.zeros((b, b)), f"Qd[{k}]") for k in range(m)}
    Q2 = {(i, k): rt.new_item(np.zeros((2 * b, 2 * b)), f"Q2[{i}][{k}]")
          for i in range(m) for k in range(i)}
    for i in range(m):
        for j in range(m):
            rt.submit("fill_random", [A[i, j], 42, 0, i, j, m])
    for k in range(m):
        rt.submit("qr", [A[k, k], Qd[k,]])
        for j in range(k + 1, m):
            rt.submit("apply_q", [Qd[k,], A[k, j]])
        for i in range(k + 1, m):
            rt.submit("little_qr", [A[k, k], A[i, k], Q2[i, k]])
            for j in range(k + 1, m):
                rt.submit("apply_pair", [Q2[i, k], A[k, j], A[i, j]])
    rt.barrier()

    def collect():
        return {"A": _gather(rt, A, (m, m), b), "Qd": _gather(rt, Qd, (m,), b),
                "Q2": _gather(rt, Q2, (m, m), 2 * b)}
    return collect


def gemm(rt, m: int, b: int, alpha: float, beta: float, fine: bool = False):
    """C = alpha * A * B + beta * C on m x m blocks of b x b elements, or
    element by element on an (m*b) x (m*b) matrix when ``fine``."""
    n = m * b
    if fine:
        m = n
    cells = [(i, j) for i in range(m) for j in range(m)]

    def make(name):
        if fine:
            return {c: rt.new_item(0.0, f"{name}[{c[0]}][{c[1]}]") for c in cells}
        return _blocks(rt, name, m, b, cells)
    A, B, C = make("A"), make("B"), make("C")
    for i, j in cells:
        rt.submit("fill_random", [A[i, j], 42, 0, i, j, m])
        rt.submit("fill_random", [B[i, j], 42, 1, i, j, m])
        rt.submit("fill_random", [C[i, j], 42, 2, i, j, m])
    for i, j in cells:
        rt.submit("scale", [C[i, j], beta])
    for i, j in cells:
        for k in range(m):
            rt.submit("multiply", [C[i, j], A[i, k], B[k, j], alpha])
    rt.barrier()

    def collect():
        out = {}
        for name, items in (("A", A), ("B", B), ("C", C)):
            if fine:
                arr = np.zeros((n, n))
                for idx, item in items.items():
                    arr[idx] = rt.wait_on(item)
            else:
                arr = block_matrix(_gather(rt, items, (m, m), b))
            out[name] = arr
        return out
    return collect


DRIVERS = {"cholesky": cholesky, "lu": lu, "qr": qr}
