"""The bundled applications: sources, hand-taskified drivers and runners."""
from .core import (
    APPS, CSV_HEADER, VARIANTS, BenchmarkRun, BenchmarkSpec, count_tasks, csv_row,
    expected_counts, expected_total, max_relative_error, residual, results_csv,
    run_benchmark, run_sequential, verify,
)
from .sources import SOURCES, gemm_source
