"""End-to-end parallelization of a DSL program."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

from .codegen import GeneratedProgram, emit_program
from .dependence import Dependence, compute_dependences
from .dsl import Program, parse
from .dsl.nodes import ForLoop, walk_stmts
from .scop import ExtractionResult, Scop, extract_scops
from .transform import (
    DEFAULT_TILE_SIZE, LoopAnnotations, TaskifyTooDeep, TaskProgram, detect_parallel_loops,
    shared_band, taskify, tile,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineOptions:
    """``tile=None`` disables tiling; an empty tuple tiles every shared
    outer loop with the default size."""
    tile: Optional[tuple[int, ...]] = None
    taskify_level: int = 0


@dataclass
class ScopResult:
    index: int  # position of the nest in the program body
    scop: Scop
    dependences: list[Dependence]
    transformed: Scop
    annotations: LoopAnnotations
    tasks: TaskProgram


@dataclass
class PipelineResult:
    program: Program
    extraction: ExtractionResult
    scops: list[ScopResult]
    generated: GeneratedProgram

    @property
    def source(self) -> str:
        return self.generated.source


def _names(p: Program) -> set[str]:
    out = set(p.param_names) | {a.name for a in p.arrays}
    for s in walk_stmts(p.body):
        if isinstance(s, ForLoop):
            out.add(s.iterator)
    return out


def _tile_sizes(s: Scop, requested: Optional[tuple[int, ...]]) -> tuple[int, ...]:
    if requested is None:
        return ()
    band = shared_band(s)
    if not requested:
        return (DEFAULT_TILE_SIZE,) * band
    return tuple(requested[:band])


def parallelize_program(p: Program, options: PipelineOptions = PipelineOptions()) -> PipelineResult:
    if options.taskify_level < 0:
        raise ValueError("taskify level must be non-negative")
    extraction = extract_scops(p)
    depths = [s.max_depth for s, _ in extraction.scops]
    if depths and options.taskify_level > max(depths):
        raise TaskifyTooDeep(f"taskify level {options.taskify_level} exceeds the deepest "
                             f"nest ({max(depths)} loops)")
    reserved = _names(p)
    counter = itertools.count(1)
    results, tasks, body, origins = [], [], [], []
    for kind, item, index in extraction.items:
        if kind == "residual":
            body.append(item)
            origins.append(index)
            continue
        deps = compute_dependences(item)
        sizes = _tile_sizes(item, options.tile)
        transformed = tile(item, sizes, deps, reserved) if sizes else item
        tdeps = compute_dependences(transformed) if sizes else deps
        level = min(options.taskify_level, transformed.max_depth)
        ann = detect_parallel_loops(transformed, tdeps, sizes, level)
        tp = taskify(transformed, ann, counter)
        log.info("nest %d: %d statements, %d dependences, tile %s, %d task types",
                 index, len(item.statements), len(deps), sizes or "none", len(tp.task_defs))
        results.append(ScopResult(index, item, deps, transformed, ann, tp))
        tasks.extend(tp.task_defs)
        body.extend(tp.main_body)
        origins.extend([index] * len(tp.main_body))
    out = Program(p.params, p.arrays, p.tasks + tuple(tasks), tuple(body))
    return PipelineResult(p, extraction, results, emit_program(out, origins))


@lru_cache(maxsize=64)
def _cached(source: str, options: PipelineOptions) -> PipelineResult:
    return parallelize_program(parse(source), options)


def parallelize(source: Union[str, Program], options: PipelineOptions = PipelineOptions()
                ) -> PipelineResult:
    """Parse (if needed), analyze and taskify a program. Results for source
    text are cached, so treat them as read-only."""
    if isinstance(source, Program):
        return parallelize_program(source, options)
    return _cached(source, options)
