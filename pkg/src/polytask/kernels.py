"""Opaque kernels callable from DSL programs and hand-written task code.

A kernel is pure: it receives argument payloads (numpy blocks or floats)
and returns new values for the arguments it writes, in argument order.
Each kernel also reports a flop count used by the simulated cost model.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg

_local = threading.local()


def count_flops(n: float) -> None:
    _local.flops = getattr(_local, "flops", 0.0) + n


def take_flops() -> float:
    n = getattr(_local, "flops", 0.0)
    _local.flops = 0.0
    return n


@contextmanager
def dry_run():
    """Kernels called inside this block only count flops and return their
    written arguments unchanged (graph-only runs)."""
    prev = getattr(_local, "dry", False)
    _local.dry = True
    try:
        yield
    finally:
        _local.dry = prev


def is_dry() -> bool:
    return getattr(_local, "dry", False)


class NotHermitianPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Kernel:
    name: str
    directions: tuple[str, ...]
    fn: Callable
    flops: Callable = lambda *args: 0.0
    init: bool = False  # data-initialization kernel (reported as INIT_TIME)

    def __call__(self, *args):
        count_flops(self.flops(*args))
        if is_dry():
            return tuple(args[i] for i in self.written)
        out = self.fn(*args)
        return out if isinstance(out, tuple) else (out,)

    @property
    def written(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.directions) if d != "in")


def _side(x) -> int:
    return int(np.shape(x)[0]) if np.ndim(x) else 1


def _mm(a, b):
    return a @ b if np.ndim(a) == 2 else a * b


# data generation ---------------------------------------------------------------

@lru_cache(maxsize=64)
def _dense(seed: int, which: int, n: int, kind: str) -> np.ndarray:
    rng = np.random.default_rng([seed, which, n])
    r = rng.random((n, n))
    if kind == "spd":
        # symmetric and strictly diagonally dominant with a positive diagonal
        return (r + r.T) / 2 + 2 * n * np.eye(n)
    if kind == "diagdom":
        return r + 2 * n * np.eye(n)
    return r


def _fill(kind):
    def fn(x, seed, which, i, j, nblocks):
        b = _side(x)
        full = _dense(int(seed), int(which), int(nblocks) * b, kind)
        block = full[int(i) * b:(int(i) + 1) * b, int(j) * b:(int(j) + 1) * b]
        return block.copy() if np.ndim(x) == 2 else float(block[0, 0])
    return fn


def dense_matrix(seed: int, which: int, n: int, kind: str = "random") -> np.ndarray:
    """The full matrix the ``fill_*`` kernels slice their blocks from."""
    return _dense(seed, which, n, kind).copy()


def _fill_identity(x, i, j):
    b = _side(x)
    block = np.eye(b) if int(i) == int(j) else np.zeros((b, b))
    return block if np.ndim(x) == 2 else float(block[0, 0])


def _zero(x):
    return np.zeros_like(x) if np.ndim(x) else 0.0


# fine-grain / GEMM ----------------------------------------------------------------

def _scale(c, beta):
    return c * beta


def _multiply(c, a, b, alpha):
    return c + alpha * _mm(a, b)


def _compute(c, a, b):
    return _mm(a, b) + 1.0


# Cholesky (right-looking) ------------------------------------------------------------

def _potrf(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotHermitianPositiveDefinite(str(exc)) from exc


def _solve_triangular(lkk, aik):
    # A_ik <- A_ik * L_kk^{-T}
    return scipy.linalg.solve_triangular(lkk, aik.T, lower=True).T


def _gemm(aik, ajk, aij):
    return aij - aik @ ajk.T


# LU without pivoting ---------------------------------------------------------------

def _custom_lu(a):
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    for k in range(n - 1):
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a


def _trsm_lower(akk, akj):
    # A_kj <- L_kk^{-1} A_kj with unit-diagonal L packed below the diagonal
    return scipy.linalg.solve_triangular(akk, akj, lower=True, unit_diagonal=True)


def _trsm_upper(akk, aik):
    # A_ik <- A_ik U_kk^{-1}
    return scipy.linalg.solve_triangular(akk, aik.T, trans="T", lower=False).T


def _dgemm(aik, akj, aij):
    return aij - aik @ akj


# QR by pairwise block annihilation ----------------------------------------------------

def _qr(akk, qkk):
    q, r = np.linalg.qr(akk, mode="complete")
    return r, q


def _apply_q(qkk, akj):
    return qkk.T @ akj


def _little_qr(akk, aik, qik):
    b = akk.shape[0]
    q, r = np.linalg.qr(np.vstack([akk, aik]), mode="complete")
    return r[:b].copy(), r[b:].copy(), q


def _apply_pair(qik, akj, aij):
    b = akj.shape[0]
    out = qik.T @ np.vstack([akj, aij])
    return out[:b].copy(), out[b:].copy()


def _cube(x):
    return float(_side(x)) ** 3


def _square(x):
    return float(_side(x)) ** 2


KERNELS: dict[str, Kernel] = {}


def register_kernel(kernel: Kernel) -> Kernel:
    KERNELS[kernel.name] = kernel
    return kernel


for _k in [
    Kernel("fill_random", ("out", "in", "in", "in", "in", "in"), _fill("random"),
           lambda x, *a: _square(x), init=True),
    Kernel("fill_spd", ("out", "in", "in", "in", "in", "in"), _fill("spd"),
           lambda x, *a: _square(x), init=True),
    Kernel("fill_diagdom", ("out", "in", "in", "in", "in", "in"), _fill("diagdom"),
           lambda x, *a: _square(x), init=True),
    Kernel("fill_identity", ("out", "in", "in"), _fill_identity,
           lambda x, *a: _square(x), init=True),
    Kernel("zero", ("out",), _zero, lambda x: _square(x), init=True),
    Kernel("scale", ("inout", "in"), _scale, lambda c, beta: _square(c)),
    Kernel("multiply", ("inout", "in", "in", "in"), _multiply,
           lambda c, a, b, alpha: 2 * _cube(c) + _square(c)),
    Kernel("compute", ("out", "in", "in"), _compute, lambda c, a, b: 2 * _cube(c)),
    Kernel("potrf", ("inout",), _potrf, lambda a: _cube(a) / 3),
    Kernel("solve_triangular", ("in", "inout"), _solve_triangular, lambda l, a: _cube(a)),
    Kernel("gemm", ("in", "in", "inout"), _gemm, lambda a, b, c: 2 * _cube(c)),
    Kernel("custom_lu", ("inout",), _custom_lu, lambda a: 2 * _cube(a) / 3),
    Kernel("trsm_lower", ("in", "inout"), _trsm_lower, lambda l, a: _cube(a)),
    Kernel("trsm_upper", ("in", "inout"), _trsm_upper, lambda u, a: _cube(a)),
    Kernel("dgemm", ("in", "in", "inout"), _dgemm, lambda a, b, c: 2 * _cube(c)),
    Kernel("qr", ("inout", "out"), _qr, lambda a, q: 4 * _cube(a) / 3),
    Kernel("apply_q", ("in", "inout"), _apply_q, lambda q, a: 2 * _cube(a)),
    Kernel("little_qr", ("inout", "inout", "out"), _little_qr, lambda a, b, q: 8 * _cube(a)),
    Kernel("apply_pair", ("in", "inout", "inout"), _apply_pair, lambda q, a, b: 8 * _cube(a)),
]:
    register_kernel(_k)

INIT_KERNELS = frozenset(k.name for k in KERNELS.values() if k.init)
