"""Machine-readable JSON record of a FitResult.

The record stores every field of the result, so reading it back rebuilds an
equal FitResult (floats survive the JSON round trip exactly).
"""

from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..data_functions.load import save_text_atomic  # noqa: TID252
from ..evaluation.metrics import RefitSummary  # noqa: TID252
from ..models.families import FamilyId  # noqa: TID252
from ..models.selector import FitResult, Move, Neighbor, NeighborReport  # noqa: TID252
from ..models.structures import (  # noqa: TID252
    MixtureAssignment,
    ProbabilityTriple,
    Theta,
)

_RECORD_CONFIG = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="constants")


class ThetaRecord(BaseModel):
    """Model parameters."""

    model_config = _RECORD_CONFIG

    beta: list[float]
    mu: float
    sigma2: float
    phi: float
    p: tuple[float, float, float]


class MoveRecord(BaseModel):
    """One applied relabelling."""

    model_config = _RECORD_CONFIG

    iteration: int
    k: int
    old: int
    new: int
    delta: float
    round: int


class NeighborRecord(BaseModel):
    """One edge of the neighbor graph."""

    model_config = _RECORD_CONFIG

    selected: int
    index: int
    name: str
    correlation: float


class RefitRecord(BaseModel):
    """Unpenalized refit summary."""

    model_config = _RECORD_CONFIG

    family: FamilyId
    columns: list[str]
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    aic: float
    r_squared: float | None
    deviance: float | None
    loglik: float


class FitRecord(BaseModel):
    """Serialized FitResult."""

    model_config = _RECORD_CONFIG

    gamma: list[int]
    theta: ThetaRecord
    loglik_trace: list[float]
    moves: list[MoveRecord]
    selected_columns: dict[int, str]
    neighbors: list[NeighborRecord]
    excluded_columns: list[str]
    refit: RefitRecord
    warnings: list[str]
    converged: bool
    n_outer: int
    inner_converged: bool
    selected_names: list[str]
    effects: dict[str, float]
    rounds: dict[str, int]
    restart_index: int | None

    @classmethod
    def from_result(cls, result: FitResult) -> "FitRecord":
        """Capture every field of ``result``."""
        theta = result.theta_final
        report = result.neighbor_report
        refit = result.refit_summary
        return cls(
            gamma=result.gamma_final.gamma.tolist(),
            theta=ThetaRecord(
                beta=theta.beta.tolist(),
                mu=theta.mu,
                sigma2=theta.sigma2,
                phi=theta.phi,
                p=tuple(theta.p),
            ),
            loglik_trace=list(result.loglik_trace),
            moves=[
                MoveRecord.model_validate(m, from_attributes=True)
                for m in result.moves
            ],
            selected_columns=dict(report.names),
            neighbors=[
                NeighborRecord(
                    selected=k, index=n.index, name=n.name, correlation=n.correlation
                )
                for k in sorted(report.neighbors)
                for n in report.neighbors[k]
            ],
            excluded_columns=list(report.excluded),
            refit=RefitRecord(
                family=refit.family,
                columns=list(refit.columns),
                coefficients=refit.coefficients,
                standard_errors=refit.standard_errors,
                aic=refit.aic,
                r_squared=refit.r_squared,
                deviance=refit.deviance,
                loglik=refit.loglik,
            ),
            warnings=list(result.warnings),
            converged=result.converged,
            n_outer=result.n_outer,
            inner_converged=result.inner_converged,
            selected_names=list(result.selected_names),
            effects=result.effects,
            rounds=result.rounds,
            restart_index=result.restart_index,
        )

    def to_result(self) -> FitResult:
        """Rebuild the FitResult."""
        neighbors: dict[int, tuple[Neighbor, ...]] = dict.fromkeys(
            self.selected_columns, ()
        )
        for edge in self.neighbors:
            neighbors[edge.selected] = (
                *neighbors.get(edge.selected, ()),
                Neighbor(
                    index=edge.index, name=edge.name, correlation=edge.correlation
                ),
            )
        return FitResult(
            gamma_final=MixtureAssignment(np.asarray(self.gamma, dtype=np.int8)),
            theta_final=Theta(
                beta=np.asarray(self.theta.beta, dtype=np.float64),
                mu=self.theta.mu,
                sigma2=self.theta.sigma2,
                phi=self.theta.phi,
                p=ProbabilityTriple(*self.theta.p),
            ),
            loglik_trace=tuple(self.loglik_trace),
            moves=tuple(Move(**m.model_dump()) for m in self.moves),
            neighbor_report=NeighborReport(
                neighbors=neighbors,
                names=dict(self.selected_columns),
                excluded=tuple(self.excluded_columns),
            ),
            refit_summary=RefitSummary(
                family=self.refit.family,
                columns=tuple(self.refit.columns),
                coefficients=dict(self.refit.coefficients),
                standard_errors=dict(self.refit.standard_errors),
                aic=self.refit.aic,
                r_squared=self.refit.r_squared,
                deviance=self.refit.deviance,
                loglik=self.refit.loglik,
            ),
            warnings=tuple(self.warnings),
            converged=self.converged,
            n_outer=self.n_outer,
            inner_converged=self.inner_converged,
            selected_names=tuple(self.selected_names),
            effects=dict(self.effects),
            rounds=dict(self.rounds),
            restart_index=self.restart_index,
        )


def write_fit_record(result: FitResult, path: Path | str) -> Path:
    """Serialize ``result`` to JSON atomically."""
    record = FitRecord.from_result(result)
    return save_text_atomic(path, record.model_dump_json(indent=2))


def read_fit_record(path: Path | str) -> FitResult:
    """Read a FitResult written by ``write_fit_record``."""
    text = Path(path).read_text(encoding="utf-8")
    return FitRecord.model_validate_json(text).to_result()
