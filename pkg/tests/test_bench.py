import csv
import io

import numpy as np
import pytest

from polytask.bench import (
    APPS, CSV_HEADER, BenchmarkSpec, csv_row, expected_counts, expected_total, gemm_source,
    residual, results_csv, run_benchmark, run_sequential, verify,
)
from polytask.dsl import parse
from polytask.interp import run_program
from polytask.runtime import ZERO_OVERHEAD, simulate


@pytest.mark.parametrize("app", APPS)
@pytest.mark.parametrize("N", range(2, 13))
def test_userparallel_counts_match_closed_forms(app, N):
    run = run_benchmark(BenchmarkSpec(app, N, 2, "userparallel"), execute=False, simulate_run=False)
    assert run.runtime.count_tasks() == expected_counts(app, N)
    assert run.report.task_count == expected_total(app, N)


@pytest.mark.parametrize("N", range(2, 9))
def test_cholesky_autoparallel_counts(N):
    run = run_benchmark(BenchmarkSpec("cholesky", N, 2, "autoparallel"), execute=False,
                        simulate_run=False)
    # generated tasks are named after the statement they wrap, in source order
    kernel = {"S1_task": "fill_spd", "S2_task": "zero", "S3_task": "potrf",
              "S4_task": "solve_triangular", "S5_task": "gemm"}
    got = {kernel[k]: v for k, v in run.runtime.count_tasks().items()}
    assert got == expected_counts("cholesky", N, "autoparallel")


def test_cholesky_32_totals():
    assert expected_total("cholesky", 32) == 6512
    assert expected_total("cholesky", 32, "autoparallel") == 7008


@pytest.mark.parametrize("app", ["lu", "qr"])
def test_lu_qr_autoparallel_equals_hand_taskified(app):
    # one task per kernel call here; no statement splitting
    for N in (2, 3, 5):
        run = run_benchmark(BenchmarkSpec(app, N, 2, "autoparallel"), execute=False,
                            simulate_run=False)
        assert run.report.task_count == expected_total(app, N)


@pytest.mark.parametrize("app", APPS)
@pytest.mark.parametrize("variant", ["userparallel", "autoparallel"])
def test_results_verify_and_factor(app, variant):
    spec = BenchmarkSpec(app, 3, 3, variant)
    run = run_benchmark(spec, workers=2)
    assert verify(run) <= 1e-12
    assert residual(run.arrays, spec) <= 1e-12


def test_sequential_residuals():
    for app in APPS:
        spec = BenchmarkSpec(app, 2, 4, "sequential")
        assert residual(run_sequential(spec).arrays, spec) <= 1e-12


def test_fine_grain_gemm_matches_blocked():
    blocked = run_benchmark(BenchmarkSpec("gemm", 2, 3, "userparallel"))
    fine = run_benchmark(BenchmarkSpec("gemm", 2, 3, "userparallel-fg"))
    assert np.allclose(blocked.arrays["C"], fine.arrays["C"], rtol=1e-12, atol=0)
    assert fine.report.task_count == expected_total("gemm", 6)


def test_gemm_with_identity_is_a_copy():
    src = gemm_source(alpha=1.0, beta=0.0, identity_b=True)
    out = run_program(parse(src), {"n": 5})
    assert np.array_equal(out["C"], out["A"])
    assert np.array_equal(out["B"], np.eye(5))


@pytest.mark.parametrize("app", APPS)
@pytest.mark.parametrize("variant", ["userparallel", "autoparallel"])
def test_more_workers_never_slower(app, variant):
    run = run_benchmark(BenchmarkSpec(app, 5, 4, variant), execute=False, simulate_run=False)
    spans = [simulate(run.runtime, workers=W, cost=ZERO_OVERHEAD).makespan for W in (1, 2, 4)]
    assert spans[2] < spans[0]  # every app has some independent work


def test_spec_validation():
    with pytest.raises(ValueError):
        BenchmarkSpec("fft", 2, 2)
    with pytest.raises(ValueError):
        BenchmarkSpec("lu", 2, 2, "userparallel-fg")
    with pytest.raises(ValueError):
        BenchmarkSpec("lu", 0, 2)


def test_gemm_params_and_options():
    spec = BenchmarkSpec("gemm", 4, 8)
    assert spec.params == {"n": 32}
    assert spec.options.tile == (8, 8, 8) and spec.options.taskify_level == 3


def test_results_csv():
    run = run_benchmark(BenchmarkSpec("lu", 2, 2, "userparallel"))
    text = results_csv([csv_row(1, run, 4, False)])
    assert text.splitlines()[0] == CSV_HEADER
    (row,) = list(csv.DictReader(io.StringIO(text)))
    assert row["VERSION"] == "userparallel" and row["NUM_TASKS"] == "9"
    assert row["TRACING"] == "false" and row["NUM_WORKERS"] == "4"
    assert float(row["TOTAL_TIME"]) >= float(row["COMP_TIME"])
