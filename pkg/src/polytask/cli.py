"""Command-line front end: ``polytask <command> ...``.

Exit status: 0 on success, 1 when parsing, analysis or execution fails,
2 on flag misuse. Diagnostics go to stderr; stdout carries results only.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bench import (APPS, VARIANTS, BenchmarkSpec, csv_row, results_csv, run_benchmark, SOURCES)
from .dsl import DslError, Program, parse
from .interp import Interpreter, InterpreterError
from .openscop import FormatError, write_openscop
from .pipeline import PipelineOptions, parallelize
from .runtime.engine import SCHEDULERS, Runtime, RuntimeError_
from .runtime.simulate import CostModel, ExecutionReport, export_dot, export_trace, simulate
from .transform import read_tile_sizes

log = logging.getLogger("polytask")

LOG_LEVELS = {"off": logging.CRITICAL + 10, "info": logging.INFO, "debug": logging.DEBUG}
RESULTS_ENV = "POLYTASK_RESULTS_DIR"


class PipelineFailure(Exception):
    pass


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _non_negative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _param(text: str) -> tuple[str, int]:
    name, sep, value = text.partition("=")
    try:
        if not sep or not name:
            raise ValueError
        return name.strip(), int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME=INT, got {text!r}") from None


def _pipeline_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("parallelization")
    tiles = g.add_mutually_exclusive_group()
    tiles.add_argument("--tile", nargs="*", type=_positive, metavar="SIZE",
                       help="tile the outer shared loops (default size 8 per level)")
    tiles.add_argument("--tile-file", metavar="PATH",
                       help="read tile sizes from a file, one per line")
    g.add_argument("--taskify-loop-level", type=_non_negative, default=0, metavar="N",
                   help="turn loops deeper than N into tasks (default 0: one task per statement)")
    g.add_argument("--force-autogen", type=_bool, nargs="?", const=True, default=True,
                   metavar="BOOL", help="regenerate the _autogen file even if it exists (default true)")
    g.add_argument("--generate-only", type=_bool, nargs="?", const=True, default=False,
                   metavar="BOOL", help="only write the generated code (default false)")
    return p


def _run_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("execution")
    g.add_argument("--workers", type=_positive, default=1, help="simulated workers (default 1)")
    g.add_argument("--cores", type=_positive, default=1, help="cores per worker (default 1)")
    g.add_argument("--scheduler", choices=SCHEDULERS, default="fifo")
    g.add_argument("--seed", type=int, default=0, help="seed of the random scheduler")
    g.add_argument("--graph-only", action="store_true",
                   help="build the task graph without running kernels")
    g.add_argument("--task-overhead", type=float, default=1e-3, metavar="SECONDS")
    g.add_argument("--serialization", type=float, default=1e-9, metavar="SECONDS_PER_BYTE")
    g.add_argument("--transfer", type=float, default=5e-9, metavar="SECONDS_PER_BYTE")
    g.add_argument("--flops-rate", type=float, default=1e9, metavar="FLOPS_PER_SECOND")
    g.add_argument("--dot", metavar="PATH", help="write the task graph as DOT")
    g.add_argument("--trace", metavar="PATH", help="write the simulated schedule as JSON")
    return p


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--log-level", choices=tuple(LOG_LEVELS), default="off")
    p.add_argument("--output-dir", metavar="DIR",
                   help=f"where outputs go (overrides ${RESULTS_ENV})")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polytask",
                                     description="Polyhedral auto-parallelization of loop nests "
                                                 "into task-based programs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common, pipe, run = _common_flags(), _pipeline_flags(), _run_flags()

    p = sub.add_parser("parallelize", parents=[common, pipe, run],
                       help="generate <name>_autogen.apl, .scop and dependences; run it if "
                            "every parameter has a value")
    p.add_argument("input", help="DSL source (.apl)")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="NAME=INT")

    p = sub.add_parser("run", parents=[common, pipe, run],
                       help="run a bundled benchmark or a DSL file and print a results block")
    p.add_argument("target", help=f"one of {', '.join(APPS)} or a .apl file")
    p.add_argument("--msize", type=_positive, default=4, help="blocks per dimension (default 4)")
    p.add_argument("--bsize", type=_positive, default=4, help="elements per block side (default 4)")
    p.add_argument("--variant", choices=VARIANTS, default="autoparallel")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="NAME=INT")

    p = sub.add_parser("bench", parents=[common, run],
                       help="run a grid of benchmark configurations and write a results CSV")
    p.add_argument("apps", nargs="*", metavar="APP",
                   help=f"benchmarks to run (default: all of {', '.join(APPS)})")
    p.add_argument("--msize", type=_positive, nargs="+", default=[4])
    p.add_argument("--bsize", type=_positive, nargs="+", default=[4])
    p.add_argument("--variants", nargs="+", choices=VARIANTS,
                   default=["userparallel", "autoparallel"])
    p.add_argument("--num-workers", type=_positive, nargs="+", default=None,
                   help="worker counts to sweep (default: --workers)")
    p.add_argument("--tracing", action="store_true", help="dump DOT and trace files per run")

    p = sub.add_parser("deps", parents=[common], help="print dependences as JSON")
    p.add_argument("input")
    p = sub.add_parser("scop", parents=[common], help="print the OpenScop text of every nest")
    p.add_argument("input")
    return parser


# helpers ----------------------------------------------------------------------------------

def _output_dir(args, default: Path) -> Path:
    if args.output_dir:
        return Path(args.output_dir)
    env = os.environ.get(RESULTS_ENV)
    return Path(env) if env else default


def _tile_option(args) -> Optional[tuple[int, ...]]:
    if getattr(args, "tile_file", None):
        try:
            return read_tile_sizes(Path(args.tile_file).read_text())
        except OSError as exc:
            raise PipelineFailure(f"cannot read tile file: {exc}") from exc
    if getattr(args, "tile", None) is None:
        return None
    return tuple(args.tile)


def _cost(args) -> CostModel:
    return CostModel(args.task_overhead, args.serialization, args.transfer, args.flops_rate)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise PipelineFailure(f"cannot read {path}: {exc}") from exc


def _stem(path: str) -> str:
    return Path(path).stem


def _deps_json(result) -> str:
    out = []
    for sr in result.scops:
        for d in sr.dependences:
            out.append({"nest": sr.index, **d.to_json()})
    return json.dumps(out, indent=2) + "\n"


def _write_outputs(result, name: str, outdir: Path) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    autogen = outdir / f"{name}_autogen.apl"
    autogen.write_text(result.source)
    scops = [sr.scop for sr in result.scops]
    if len(scops) == 1:
        (outdir / f"{name}.scop").write_text(write_openscop(scops[0]))
    else:
        for k, s in enumerate(scops, 1):
            (outdir / f"{name}_{k}.scop").write_text(write_openscop(s))
    (outdir / f"{name}_deps.json").write_text(_deps_json(result))
    log.info("wrote %s", autogen)
    return autogen


def _generated_program(source_path: str, args, outdir: Path) -> Program:
    """Generate (or reuse, with --force-autogen false) the autogen program."""
    name = _stem(source_path)
    autogen = outdir / f"{name}_autogen.apl"
    if not args.force_autogen and autogen.exists():
        log.info("reusing %s", autogen)
        return parse(autogen.read_text())
    options = PipelineOptions(_tile_option(args), args.taskify_loop_level)
    result = parallelize(_read(source_path), options)
    _write_outputs(result, name, outdir)
    return result.generated.program


def _execute_program(prog: Program, params: dict, args, parallel: bool):
    """Run a program on the runtime (or the local interpreter when not
    parallel); returns the report and the runtime."""
    if not parallel:
        from . import kernels as _kernels
        _kernels.take_flops()
        Interpreter(prog, params).run()
        t = _kernels.take_flops() / args.flops_rate
        return ExecutionReport(t, [t], 0, {}, 0), None
    rt = Runtime(args.workers, args.cores, args.scheduler, args.seed, not args.graph_only)
    rt.register_kernels()
    Interpreter(prog, params, rt).run()
    rt.barrier()
    return simulate(rt, cost=_cost(args)), rt


def _dump(args, rt, report) -> None:
    if rt is None:
        return
    if args.dot:
        Path(args.dot).write_text(export_dot(rt.graph))
    if args.trace:
        Path(args.trace).write_text(export_trace(report))


def results_block(version: str, fields: Sequence[tuple[str, object]], report: ExecutionReport,
                  time_label: str, debug: bool) -> str:
    lines = ["RESULTS -----------------", f"VERSION {version.upper()}"]
    lines += [f"{k} {v}" for k, v in fields]
    lines += [f"DEBUG {debug}",
              f"TOTAL_TIME {report.makespan!r}",
              f"INIT_TIME {report.init_time!r}",
              f"{time_label} {report.comp_time!r}",
              "-------------------------",
              f"Total executed tasks: {report.task_count}"]
    return "\n".join(lines) + "\n"


def _params(args, prog: Program) -> Optional[dict]:
    given = dict(args.param)
    unknown = set(given) - set(prog.param_names)
    if unknown:
        raise PipelineFailure(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    if set(prog.param_names) - set(given):
        return None
    return given


# commands ---------------------------------------------------------------------------------

def cmd_parallelize(args) -> int:
    src = args.input
    outdir = _output_dir(args, Path(src).resolve().parent)
    prog = _generated_program(src, args, outdir)
    if args.generate_only:
        return 0
    params = _params(args, prog)
    if params is None:
        print(f"not executed: missing --param values for {', '.join(prog.param_names)}",
              file=sys.stderr)
        return 0
    report, rt = _execute_program(prog, params, args, True)
    _dump(args, rt, report)
    sys.stdout.write(results_block("autoparallel", sorted(params.items()), report, "COMP_TIME",
                                   args.log_level == "debug"))
    return 0


def cmd_run(args) -> int:
    debug = args.log_level == "debug"
    if args.target.endswith(".apl") or os.path.sep in args.target:
        src = args.target
        parallel = args.variant != "sequential"
        if parallel:
            outdir = _output_dir(args, Path(src).resolve().parent)
            prog = _generated_program(src, args, outdir)
            if args.generate_only:
                return 0
        else:
            prog = parse(_read(src))
        params = _params(args, prog)
        if params is None:
            raise PipelineFailure(f"give a --param value for every parameter "
                                  f"({', '.join(prog.param_names)})")
        report, rt = _execute_program(prog, params, args, parallel)
        _dump(args, rt, report)
        sys.stdout.write(results_block(args.variant, sorted(params.items()), report,
                                       "COMP_TIME", debug))
        return 0
    if args.target not in APPS:
        raise PipelineFailure(f"unknown target {args.target!r}: expected one of "
                              f"{', '.join(APPS)} or a .apl file")
    if args.variant == "userparallel-fg" and args.target != "gemm":
        raise PipelineFailure("the fine-grain variant exists for gemm only")
    spec = BenchmarkSpec(args.target, args.msize, args.bsize, args.variant,
                         _tile_option(args), args.taskify_loop_level or None)
    if args.generate_only:
        if spec.variant == "autoparallel":
            outdir = _output_dir(args, Path("results") / spec.name / spec.variant)
            _write_outputs(parallelize(SOURCES[spec.name], spec.options), spec.name, outdir)
        return 0
    run = run_benchmark(spec, args.workers, args.cores, args.scheduler, args.seed, _cost(args),
                        execute=not args.graph_only)
    _dump(args, run.runtime, run.report)
    fields = [("MSIZE", spec.msize), ("BSIZE", spec.bsize)]
    sys.stdout.write(results_block(spec.variant, fields, run.report,
                                   f"{spec.name.upper()}_TIME", debug))
    return 0


def cmd_bench(args) -> int:
    outdir = _output_dir(args, Path("results"))
    unknown = [a for a in args.apps if a not in APPS]
    if unknown:
        raise PipelineFailure(f"unknown benchmark(s): {', '.join(unknown)}")
    apps = args.apps or list(APPS)
    rows = []
    job = 0
    for app in apps:
        for variant in args.variants:
            if variant == "userparallel-fg" and app != "gemm":
                continue
            for msize in args.msize:
                for bsize in args.bsize:
                    for w in args.num_workers or [args.workers]:
                        job += 1
                        spec = BenchmarkSpec(app, msize, bsize, variant)
                        log.info("job %d: %s", job, spec)
                        run = run_benchmark(spec, w, args.cores, args.scheduler, args.seed,
                                            _cost(args), execute=not args.graph_only)
                        rows.append(csv_row(job, run, w, args.tracing))
                        if args.tracing and run.runtime is not None:
                            d = outdir / app / variant
                            d.mkdir(parents=True, exist_ok=True)
                            tag = f"m{msize}_b{bsize}_w{w}"
                            (d / f"graph_{tag}.dot").write_text(export_dot(run.runtime.graph))
                            (d / f"trace_{tag}.json").write_text(export_trace(run.report))
    text = results_csv(rows)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "results.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_deps(args) -> int:
    sys.stdout.write(_deps_json(parallelize(_read(args.input))))
    return 0


def cmd_scop(args) -> int:
    from .scop import extract_scops
    prog = parse(_read(args.input))
    sys.stdout.write("".join(write_openscop(s) for s, _ in extract_scops(prog).scops))
    return 0


COMMANDS = {"parallelize": cmd_parallelize, "run": cmd_run, "bench": cmd_bench,
            "deps": cmd_deps, "scop": cmd_scop}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=LOG_LEVELS[args.log_level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return COMMANDS[args.command](args)
    except (PipelineFailure, DslError, FormatError, InterpreterError, RuntimeError_,
            ValueError, OSError) as exc:
        print(f"polytask: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
