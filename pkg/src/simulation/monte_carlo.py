"""Replicated simulation studies scored by true and false positives."""

from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import StrEnum
import logging
from pathlib import Path
import time

import numpy as np
import polars as pl
from pydantic import BaseModel, ConfigDict
from tqdm import tqdm

from ..data_functions.load import save_text_atomic  # noqa: TID252
from ..evaluation.metrics import score  # noqa: TID252
from ..models.screening import bh_baseline  # noqa: TID252
from ..models.selector import (  # noqa: TID252
    SelectorConfig,
    initialize_gamma,
    multi_run,
    run,
)
from ..models.structures import Dataset  # noqa: TID252
from ..utils.config_utils import worker_count  # noqa: TID252
from ..utils.seed_utils import child_seed, make_rng  # noqa: TID252
from .scenarios import ScenarioSpec, generate

logger = logging.getLogger(__name__)

STUDY_TABLE = "study.tsv"
STUDY_RECORD = "study.json"


class Method(StrEnum):
    """Selection procedures a study can score."""

    MIXTURE = "mixture"
    FDR = "fdr"


class ReplicationScore(BaseModel):
    """Outcome of one method on one replication."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    index: int
    tp: int
    fp: int
    selected: list[int]
    failed: bool = False
    error: str | None = None


def _median(values: list[int]) -> float:
    return float(np.median(values)) if values else float("nan")


@dataclass(frozen=True)
class StudyResult:
    """Scores of one method over all replications of a scenario.

    Failed replications are counted in ``failures`` and left out of the medians.
    """

    method: Method
    spec: ScenarioSpec
    replications: tuple[ReplicationScore, ...]
    seconds: float = 0.0

    @property
    def scored(self) -> list[ReplicationScore]:
        """Replications that produced a selection."""
        return [r for r in self.replications if not r.failed]

    @property
    def failures(self) -> int:
        """Number of failed replications."""
        return len(self.replications) - len(self.scored)

    @property
    def median_tp(self) -> float:
        """Median true positives over scored replications."""
        return _median([r.tp for r in self.scored])

    @property
    def median_fp(self) -> float:
        """Median false positives over scored replications."""
        return _median([r.fp for r in self.scored])


def _select(
    method: Method,
    spec: ScenarioSpec,
    config: SelectorConfig,
    index: int,
    data: Dataset,
) -> list[int]:
    if method is Method.FDR:
        return bh_baseline(data, config.screen_level)
    if config.n_restarts > 1:
        return multi_run(data, config, workers=1).best.selected
    rng = make_rng(child_seed(spec.rng_seed, index, 1))
    return run(data, config, initialize_gamma(data, config), rng=rng).selected


def _replicate(
    args: tuple[ScenarioSpec, SelectorConfig, tuple[Method, ...], int],
) -> tuple[list[ReplicationScore], list[float]]:
    spec, config, methods, index = args
    data, truth = generate(spec, index)
    scores, timings = [], []
    for method in methods:
        started = time.perf_counter()
        try:
            selected = _select(method, spec, config, index, data)
        except (ValueError, np.linalg.LinAlgError) as e:
            logger.warning(
                "%s replication %d failed for %s: %s", spec.id, index, method, e
            )
            scores.append(
                ReplicationScore(
                    index=index, tp=0, fp=0, selected=[], failed=True, error=str(e)
                )
            )
        else:
            tp, fp = score(selected, truth)
            scores.append(
                ReplicationScore(index=index, tp=tp, fp=fp, selected=selected)
            )
        timings.append(time.perf_counter() - started)
    return scores, timings


def run_studies(
    spec: ScenarioSpec,
    config: SelectorConfig,
    methods: Sequence[Method | str] = (Method.MIXTURE,),
    workers: int | None = None,
) -> list[StudyResult]:
    """Generate every replication once and score each method on it.

    Replications are independent jobs; their random streams depend only on the
    scenario seed and the replication index, so results do not depend on the
    worker count.
    """
    chosen = tuple(Method(m) for m in methods)
    jobs = [(spec, config, chosen, i) for i in range(spec.replications)]
    n_workers = min(workers if workers is not None else worker_count(), len(jobs))
    desc = f"{spec.id} replications"
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(
                tqdm(pool.map(_replicate, jobs), total=len(jobs), desc=desc)
            )
    else:
        outcomes = [_replicate(job) for job in tqdm(jobs, desc=desc)]

    results = []
    for slot, method in enumerate(chosen):
        result = StudyResult(
            method=method,
            spec=spec,
            replications=tuple(scores[slot] for scores, _ in outcomes),
            seconds=float(sum(timings[slot] for _, timings in outcomes)),
        )
        logger.info(
            "%s %s: median TP=%g, median FP=%g, failures=%d, %.1fs",
            spec.id,
            method,
            result.median_tp,
            result.median_fp,
            result.failures,
            result.seconds,
        )
        results.append(result)
    return results


def run_study(
    spec: ScenarioSpec, config: SelectorConfig, workers: int | None = None
) -> StudyResult:
    """Score the mixture selector over all replications of ``spec``."""
    return run_studies(spec, config, (Method.MIXTURE,), workers)[0]


class StudyRecord(BaseModel):
    """Machine-readable study outcome for one method."""

    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="constants")

    method: Method
    scenario: str
    N: int  # noqa: N815
    K: int  # noqa: N815
    L: int  # noqa: N815
    rng_seed: int
    median_tp: float
    median_fp: float
    failures: int
    replications: list[ReplicationScore]

    @classmethod
    def from_result(cls, result: StudyResult) -> "StudyRecord":
        """Capture a StudyResult, leaving out timing."""
        return cls(
            method=result.method,
            scenario=result.spec.id.value,
            N=result.spec.n,
            K=result.spec.K,
            L=result.spec.L,
            rng_seed=result.spec.rng_seed,
            median_tp=result.median_tp,
            median_fp=result.median_fp,
            failures=result.failures,
            replications=list(result.replications),
        )


class StudyReport(BaseModel):
    """All methods of one or more studies."""

    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="constants")

    studies: list[StudyRecord]


def study_table(results: Sequence[StudyResult]) -> pl.DataFrame:
    """One row per (method, scenario) with median TP and FP."""
    return pl.DataFrame(
        [
            {
                "method": r.method.value,
                "scenario": r.spec.id.value,
                "N": r.spec.n,
                "K": r.spec.K,
                "L": r.spec.L,
                "median_tp": r.median_tp,
                "median_fp": r.median_fp,
                "replications": len(r.replications),
                "failures": r.failures,
            }
            for r in results
        ],
        schema={
            "method": pl.Utf8,
            "scenario": pl.Utf8,
            "N": pl.Int64,
            "K": pl.Int64,
            "L": pl.Int64,
            "median_tp": pl.Float64,
            "median_fp": pl.Float64,
            "replications": pl.Int64,
            "failures": pl.Int64,
        },
    )


def write_study_outputs(
    results: Sequence[StudyResult], out_dir: Path | str
) -> tuple[Path, Path]:
    """Write the TSV table and the JSON record; both are deterministic."""
    out = Path(out_dir)
    table = study_table(results).write_csv(separator="\t")
    table_path = save_text_atomic(out / STUDY_TABLE, table)
    report = StudyReport(studies=[StudyRecord.from_result(r) for r in results])
    record_path = save_text_atomic(out / STUDY_RECORD, report.model_dump_json(indent=2))
    return table_path, record_path
