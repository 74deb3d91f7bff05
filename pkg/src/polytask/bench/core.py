"""Running, verifying and accounting for the bundled applications."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import kernels as _kernels
from ..dsl import parse
from ..interp import Interpreter, block_matrix
from ..pipeline import PipelineOptions, parallelize
from ..runtime.engine import Runtime
from ..runtime.simulate import DEFAULT_COST, CostModel, ExecutionReport, simulate
from . import drivers
from .sources import GEMM_ALPHA, GEMM_BETA, SOURCES

APPS = ("cholesky", "lu", "qr", "gemm")
VARIANTS = ("sequential", "userparallel", "autoparallel", "userparallel-fg")
CSV_HEADER = "JOB_ID,VERSION,MSIZE,BSIZE,TRACING,NUM_WORKERS,TOTAL_TIME,INIT_TIME,COMP_TIME,NUM_TASKS"


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    msize: int
    bsize: int
    variant: str = "autoparallel"
    tile_sizes: Optional[tuple[int, ...]] = None
    taskify_level: Optional[int] = None

    def __post_init__(self):
        if self.name not in APPS:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {', '.join(APPS)}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "userparallel-fg" and self.name != "gemm":
            raise ValueError("the fine-grain variant exists for gemm only")
        if self.msize < 1 or self.bsize < 1:
            raise ValueError("msize and bsize must be >= 1")

    @property
    def params(self) -> dict[str, int]:
        if self.name == "gemm":
            return {"n": self.msize * self.bsize}
        return {"m": self.msize, "b": self.bsize}

    @property
    def options(self) -> PipelineOptions:
        if self.name == "gemm":
            # element-wise source tiled at the block size, point loops as tasks
            sizes = self.tile_sizes or (self.bsize,) * 3
            level = 3 if self.taskify_level is None else self.taskify_level
            return PipelineOptions(tuple(sizes), level)
        level = 0 if self.taskify_level is None else self.taskify_level
        return PipelineOptions(self.tile_sizes, level)


@dataclass
class BenchmarkRun:
    spec: BenchmarkSpec
    arrays: dict[str, np.ndarray]
    report: ExecutionReport
    runtime: Optional[Runtime] = None


def run_sequential(spec: BenchmarkSpec, execute: bool = True) -> BenchmarkRun:
    """The sequential DSL source on the local interpreter (the oracle)."""
    prog = parse(SOURCES[spec.name])
    _kernels.take_flops()
    if execute:
        arrays = Interpreter(prog, spec.params).run().results()
    else:
        with _kernels.dry_run():
            arrays = Interpreter(prog, spec.params).run().results()
    flops = _kernels.take_flops()
    t = flops / DEFAULT_COST.flops_per_second
    return BenchmarkRun(spec, arrays, ExecutionReport(t, [t], 0, {}, 0))


def run_benchmark(spec: BenchmarkSpec, workers: int = 1, cores: int = 1,
                  scheduler: str = "fifo", seed: int = 0, cost: CostModel = DEFAULT_COST,
                  execute: bool = True, simulate_run: bool = True) -> BenchmarkRun:
    """Run one benchmark variant. ``execute=False`` builds the task graph
    without real kernel work (graph-only runs)."""
    if spec.variant == "sequential":
        return run_sequential(spec, execute)
    rt = Runtime(workers, cores, scheduler, seed, execute)
    if spec.variant == "autoparallel":
        gen = parallelize(SOURCES[spec.name], spec.options).generated.program
        rt.register_kernels()
        interp = Interpreter(gen, spec.params, rt).run()
        rt.barrier()
        arrays = interp.results()
    else:
        rt.register_kernels()
        if spec.name == "gemm":
            collect = drivers.gemm(rt, spec.msize, spec.bsize, GEMM_ALPHA, GEMM_BETA,
                                   fine=spec.variant == "userparallel-fg")
        else:
            collect = drivers.DRIVERS[spec.name](rt, spec.msize, spec.bsize)
        arrays = collect()
    report = simulate(rt, cost=cost) if simulate_run else ExecutionReport(
        0.0, [0.0] * workers, rt.task_count, rt.count_tasks(), 0)
    return BenchmarkRun(spec, arrays, report, rt)


def count_tasks(report: ExecutionReport) -> dict[str, int]:
    return dict(report.task_count_by_type)


def max_relative_error(result: dict, oracle: dict) -> float:
    """Largest element-wise difference over every array, relative to the
    oracle array's largest magnitude."""
    worst = 0.0
    for name, ref in oracle.items():
        got = result[name]
        if got.shape != ref.shape:
            raise ValueError(f"{name}: shape {got.shape} differs from oracle {ref.shape}")
        scale = float(np.max(np.abs(ref))) if ref.size else 0.0
        diff = float(np.max(np.abs(got - ref))) if ref.size else 0.0
        worst = max(worst, diff / scale if scale else diff)
    return worst


def residual(result: dict, spec: BenchmarkSpec) -> float:
    """Backward error of the factorization (or product) against the input."""
    n = spec.msize * spec.bsize
    if spec.name == "gemm":
        A = _kernels.dense_matrix(42, 0, n)
        B = _kernels.dense_matrix(42, 1, n)
        C0 = _kernels.dense_matrix(42, 2, n)
        ref = GEMM_ALPHA * A @ B + GEMM_BETA * C0
        return float(np.max(np.abs(result["C"] - ref)) / np.max(np.abs(ref)))
    M = block_matrix(result["A"])
    if spec.name == "cholesky":
        A = _kernels.dense_matrix(42, 0, n, "spd")
        L = np.tril(M)
        return float(np.linalg.norm(A - L @ L.T, np.inf) / np.linalg.norm(A, np.inf))
    if spec.name == "lu":
        A = _kernels.dense_matrix(42, 0, n, "diagdom")
        L = np.tril(M, -1) + np.eye(n)
        U = np.triu(M)
        return float(np.linalg.norm(A - L @ U, np.inf) / np.linalg.norm(A, np.inf))
    A = _kernels.dense_matrix(42, 0, n)
    R = np.triu(M)
    G = A.T @ A
    return float(np.linalg.norm(G - R.T @ R, np.inf) / np.linalg.norm(G, np.inf))


def verify(run: BenchmarkRun, oracle: Optional[BenchmarkRun] = None) -> float:
    """Max relative error of a run against the sequential interpreter."""
    oracle = oracle or run_sequential(BenchmarkSpec(run.spec.name, run.spec.msize,
                                                    run.spec.bsize, "sequential"))
    return max_relative_error(run.arrays, oracle.arrays)


# closed-form task counts ---------------------------------------------------------------

def expected_counts(name: str, N: int, variant: str = "userparallel") -> dict[str, int]:
    """Task counts per kernel for ``N`` blocks per dimension (see
    docs/task-counts.md for the derivations)."""
    tri = N * (N - 1) // 2
    if name == "cholesky":
        out = {"fill_spd": N * (N + 1) // 2, "potrf": N, "solve_triangular": tri,
               "gemm": sum(p * (p + 1) // 2 for p in range(1, N))}
        if variant == "autoparallel":
            out["zero"] = tri
        return out
    if name == "lu":
        return {"fill_diagdom": N * N, "custom_lu": N, "trsm_lower": tri, "trsm_upper": tri,
                "dgemm": sum(p * p for p in range(N))}
    if name == "qr":
        return {"fill_random": N * N, "qr": N, "apply_q": tri, "little_qr": tri,
                "apply_pair": sum(p * p for p in range(N))}
    if name == "gemm":
        return {"fill_random": 3 * N * N, "scale": N * N, "multiply": N ** 3}
    raise ValueError(name)


def expected_total(name: str, N: int, variant: str = "userparallel") -> int:
    return sum(expected_counts(name, N, variant).values())


# results CSV -----------------------------------------------------------------------------

def csv_row(job_id, run: BenchmarkRun, workers: int, tracing: bool) -> list:
    r = run.report
    return [job_id, run.spec.variant, run.spec.msize, run.spec.bsize,
            str(bool(tracing)).lower(), workers, f"{r.makespan:.6f}", f"{r.init_time:.6f}",
            f"{r.comp_time:.6f}", r.task_count]


def results_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(row)
    return buf.getvalue()
