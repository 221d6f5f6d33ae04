"""Alternating maximization over the latent labels and the parameters.

Each outer iteration refits theta for the current labels, scores all 3K
single-coordinate relabellings against the fitted state and applies one of
the proposals that improves the complete-data log-likelihood by more than
``delta``. The loop stops when no proposal qualifies.
"""

from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
import logging

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from ..evaluation.metrics import RefitSummary, refit_summary  # noqa: TID252
from ..utils.config_utils import worker_count  # noqa: TID252
from ..utils.exceptions import (  # noqa: TID252
    ContractViolation,
    RankDeficiencyError,
    SingularCoreError,
    ValidationError,
)
from ..utils.seed_utils import child_seed, make_rng  # noqa: TID252
from .families import (
    FamilyId,
    WorkingData,
    initial_means,
    inverse_link,
    working_response,
)
from .likelihood import (
    candidate_deltas,
    complete_loglik,
    fitted_linear_predictor,
    m_step,
    random_effect_predictions,
)
from .screening import bh_screen
from .structures import LABELS, Dataset, MixtureAssignment, Theta, as_assignment

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

DELTA_GUARD = 1e-10
ETA_LIMIT = 50.0


class SelectionMode(StrEnum):
    """How the coordinate to update is picked from the improving set."""

    GREEDY = "greedy"
    WEIGHTED = "weighted"


class InitStrategy(StrEnum):
    """Source of the starting labels."""

    BH_SCREEN = "bh_screen"
    ALL_NULL = "all_null"
    USER_PROVIDED = "user_provided"


class SelectorConfig(BaseModel):
    """Settings of the selection loop.

    ``max_outer_iter`` defaults to 20 K when left unset. ``prob_floor`` lifts
    the mixture probabilities inside the M-step; at 0 they are exactly n_j / K,
    so an empty component can never be entered.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: SelectionMode = SelectionMode.GREEDY
    delta: float = Field(default=0.0, ge=0.0)
    max_outer_iter: int | None = Field(default=None, ge=1)
    rng_seed: int = Field(default=0, ge=0, lt=2**64)
    n_restarts: int = Field(default=1, ge=1)
    neighbor_threshold: float = Field(default=0.75, ge=0.0, le=1.0)
    init_strategy: InitStrategy = InitStrategy.BH_SCREEN
    screen_level: float = Field(default=0.05, gt=0.0, lt=1.0)
    prob_floor: float = Field(default=0.0, ge=0.0, lt=1.0 / 3.0)
    m_step_tol: float = Field(default=1e-8, gt=0.0)
    m_step_max_iter: int = Field(default=100, ge=1)
    max_refreshes: int = Field(default=25, ge=0)
    refresh_tol: float = Field(default=1e-6, gt=0.0)
    max_rounds: int = Field(default=5, ge=1)

    def outer_cap(self, k: int) -> int:
        """Outer iteration limit for K putative columns."""
        if self.max_outer_iter is not None:
            return self.max_outer_iter
        return 20 * max(k, 1)


@dataclass(frozen=True)
class Move:
    """One applied relabelling; ``k`` indexes the putative columns of the input."""

    iteration: int
    k: int
    old: int
    new: int
    delta: float
    round: int = 1


@dataclass(frozen=True)
class Neighbor:
    """A putative column correlated with a selected one."""

    index: int
    name: str
    correlation: float


@dataclass(frozen=True)
class NeighborReport:
    """Correlated columns of every selected column."""

    neighbors: dict[int, tuple[Neighbor, ...]] = field(default_factory=dict)
    names: dict[int, str] = field(default_factory=dict)
    excluded: tuple[str, ...] = ()

    @property
    def relevant(self) -> frozenset[int]:
        """Selected columns together with all of their neighbors."""
        indices = set(self.neighbors)
        for group in self.neighbors.values():
            indices.update(n.index for n in group)
        return frozenset(indices)

    def edges(self) -> list[tuple[str, str, float]]:
        """(selected, neighbor, correlation) triples, sorted by selected index."""
        return [
            (self.names[k], n.name, n.correlation)
            for k in sorted(self.neighbors)
            for n in self.neighbors[k]
        ]


@dataclass(frozen=True, eq=False)
class FitResult:
    """Final labels and parameters with the full trace of the loop.

    ``loglik_trace`` holds the log-likelihood after the M-step of every outer
    iteration. For the normal family consecutive entries differ by more than
    ``delta``; for other families the working data changes between entries
    and only the move deltas are comparable.
    """

    gamma_final: MixtureAssignment
    theta_final: Theta
    loglik_trace: tuple[float, ...]
    moves: tuple[Move, ...]
    neighbor_report: NeighborReport
    refit_summary: RefitSummary
    warnings: tuple[str, ...]
    converged: bool
    n_outer: int
    inner_converged: bool
    selected_names: tuple[str, ...]
    effects: dict[str, float]
    rounds: dict[str, int]
    restart_index: int | None = None

    @property
    def selected(self) -> list[int]:
        """Indices of the columns with a non-null label."""
        return self.gamma_final.active_indices.tolist()

    @property
    def loglik(self) -> float:
        """Log-likelihood of the final state."""
        return self.loglik_trace[-1]


def initialize_gamma(
    data: Dataset,
    config: SelectorConfig,
    gamma: MixtureAssignment | ArrayLike | None = None,
) -> MixtureAssignment:
    """Starting labels according to ``config.init_strategy``.

    Raises:
        ValidationError: If a user-provided vector is missing, has the wrong
            length or contains labels outside {-1, 0, +1}.
    """
    if config.init_strategy is InitStrategy.ALL_NULL:
        return MixtureAssignment.zeros(data.K)
    if config.init_strategy is InitStrategy.BH_SCREEN:
        return bh_screen(data, config.screen_level)
    if gamma is None:
        raise ValidationError("init_strategy 'user_provided' needs a gamma vector")
    assignment = as_assignment(gamma)
    if assignment.K != data.K:
        raise ValidationError(f"gamma has {assignment.K} entries, expected {data.K}")
    return assignment


def choose_candidate(
    scores: FloatArray,
    eligible: NDArray[np.bool_],
    mode: SelectionMode | str,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """Pick (k, label) from the improving set.

    ``scores`` and ``eligible`` are K x 3 arrays whose columns are the labels
    -1, 0 and +1. Greedy takes the largest score, breaking ties by smallest k
    and then label order. Weighted draws an eligible atom with probability
    proportional to its score.

    Raises:
        ContractViolation: If no atom is eligible.
    """
    atoms = np.flatnonzero(eligible.ravel())
    if atoms.size == 0:
        raise ContractViolation("choose_candidate called with an empty improving set")
    values = scores.ravel()[atoms]
    if SelectionMode(mode) is SelectionMode.GREEDY:
        chosen = int(atoms[int(np.argmax(values))])
    else:
        if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
            raise ContractViolation("weighted choice needs finite positive scores")
        chosen = int(rng.choice(atoms, p=values / values.sum()))
    k, slot = divmod(chosen, len(LABELS))
    return k, LABELS[slot]


@dataclass(frozen=True, eq=False)
class _State:
    gamma: MixtureAssignment
    theta: Theta
    working: WorkingData
    eta: FloatArray | None
    loglik: float
    deltas: FloatArray
    inner_converged: bool


def _refresh_working(
    data: Dataset, state: _State, gamma: MixtureAssignment
) -> tuple[WorkingData, FloatArray | None]:
    """Linearize around the fitted means of ``gamma`` under the current theta."""
    if data.spec.family_id is FamilyId.NORMAL:
        return state.working, None
    eta = fitted_linear_predictor(data, state.working, gamma, state.theta)
    eta = np.clip(eta, -ETA_LIMIT, ETA_LIMIT)
    return working_response(data.spec, data.y, inverse_link(data.spec, eta)), eta


def _evaluate(
    data: Dataset,
    config: SelectorConfig,
    gamma: MixtureAssignment,
    theta: Theta,
    working: WorkingData,
    eta: FloatArray | None,
) -> _State:
    fit = m_step(
        data,
        working,
        gamma,
        theta,
        tol=config.m_step_tol,
        max_iter=config.m_step_max_iter,
        prob_floor=config.prob_floor,
    )
    deltas = candidate_deltas(data, working, gamma, fit.theta)
    return _State(
        gamma=gamma,
        theta=fit.theta,
        working=working,
        eta=eta,
        loglik=fit.loglik,
        deltas=deltas,
        inner_converged=fit.converged,
    )


def _settle(data: Dataset, config: SelectorConfig, state: _State) -> _State:
    """Refresh the working data with gamma fixed until the fitted means settle."""
    if data.spec.family_id is FamilyId.NORMAL:
        return state
    for _ in range(config.max_refreshes):
        working, eta = _refresh_working(data, state, state.gamma)
        assert eta is not None  # noqa: S101
        shift = np.inf if state.eta is None else np.max(np.abs(eta - state.eta))
        if shift < config.refresh_tol:
            break
        state = _evaluate(data, config, state.gamma, state.theta, working, eta)
    return state


def _initial_state(
    data: Dataset, config: SelectorConfig, gamma: MixtureAssignment
) -> _State:
    spec = data.spec
    means = initial_means(spec, data.y)
    working = working_response(spec, data.y, means)
    eta = None if spec.family_id is FamilyId.NORMAL else spec.family.linkfun(
        spec.family.clamp_mean(means)
    )
    theta = Theta.initial(data.J, gamma)
    state = _evaluate(data, config, gamma, theta, working, eta)
    return _settle(data, config, state)


def _advance(
    data: Dataset,
    config: SelectorConfig,
    state: _State,
    seen: set[bytes],
    rng: np.random.Generator,
    notes: list[str],
) -> tuple[_State, int, int, float] | None:
    """Apply one improving move.

    Proposals whose fit is degenerate, or whose refitted log-likelihood gain
    does not exceed ``delta``, are rejected and the next best is tried.
    """
    scores = state.deltas.copy()
    while True:
        eligible = scores > config.delta + DELTA_GUARD
        if not eligible.any():
            return None
        k, label = choose_candidate(scores, eligible, config.mode, rng)
        gain = float(scores[k, label + 1])
        candidate = state.gamma.with_label(k, label)
        if candidate.key() in seen:
            notes.append(f"skipped a move of {data.z_names[k]} to a visited state")
            scores[k, label + 1] = -np.inf
            continue
        try:
            working, eta = _refresh_working(data, state, candidate)
            following = _evaluate(data, config, candidate, state.theta, working, eta)
        except (RankDeficiencyError, SingularCoreError) as e:
            notes.append(f"rejected {data.z_names[k]} -> {label:+d}: {e}")
            logger.warning("Rejected move of %s to %+d: %s", data.z_names[k], label, e)
            scores[k, label + 1] = -np.inf
            continue
        baseline = state.loglik
        if working is not state.working:
            baseline = complete_loglik(data, working, state.gamma, state.theta)
        realized = following.loglik - baseline
        if not realized > config.delta:
            notes.append(
                f"rejected {data.z_names[k]} -> {label:+d}: refitted gain "
                f"{realized:.6g} did not exceed delta"
            )
            logger.warning(
                "Rejected move of %s to %+d: refitted gain %.6g <= delta %g",
                data.z_names[k],
                label,
                realized,
                config.delta,
            )
            seen.add(candidate.key())
            scores[k, label + 1] = -np.inf
            continue
        return following, k, label, gain


def run(
    data: Dataset,
    config: SelectorConfig,
    gamma_init: MixtureAssignment | ArrayLike,
    rng: np.random.Generator | None = None,
    restart_index: int | None = None,
) -> FitResult:
    """Run the alternating maximization from ``gamma_init`` to a stationary point.

    Reaching ``max_outer_iter`` returns the last state with ``converged`` False.
    """
    gamma = as_assignment(gamma_init)
    if gamma.K != data.K:
        raise ValidationError(f"gamma has {gamma.K} entries, expected {data.K}")
    if rng is None:
        rng = make_rng(child_seed(config.rng_seed, 0))

    state = _initial_state(data, config, gamma)
    seen = {gamma.key()}
    trace = [state.loglik]
    moves: list[Move] = []
    notes: list[str] = []
    inner_converged = state.inner_converged
    converged = False
    cap = config.outer_cap(data.K)
    iteration = 0
    for iteration in range(1, cap + 1):  # noqa: B007
        step = _advance(data, config, state, seen, rng, notes)
        if step is None:
            settled = _settle(data, config, state)
            if settled is not state:
                trace.append(settled.loglik)
            if settled is state or not np.any(
                settled.deltas > config.delta + DELTA_GUARD
            ):
                state = settled
                converged = True
                break
            state = settled
            continue
        following, k, label, gain = step
        old = int(state.gamma.gamma[k])
        moves.append(Move(iteration=iteration, k=k, old=old, new=label, delta=gain))
        seen.add(following.gamma.key())
        state = following
        trace.append(state.loglik)
        inner_converged = inner_converged and state.inner_converged
        logger.info(
            "Iteration %d: %s %+d -> %+d (d=%.6g), L=%d, loglik=%.8g",
            iteration,
            data.z_names[k],
            old,
            label,
            gain,
            state.gamma.L,
            state.loglik,
        )

    if not converged:
        message = f"reached max_outer_iter={cap} before convergence"
        notes.append(message)
        logger.warning("Selection loop %s", message)
    if not inner_converged:
        notes.append("at least one M-step stopped at its iteration limit")
    return _finish(
        data,
        config,
        state,
        trace=trace,
        moves=moves,
        notes=notes,
        converged=converged,
        n_outer=iteration,
        inner_converged=inner_converged,
        rounds=None,
        restart_index=restart_index,
    )


def _finish(
    data: Dataset,
    config: SelectorConfig,
    state: _State,
    *,
    trace: Sequence[float],
    moves: Sequence[Move],
    notes: Sequence[str],
    converged: bool,
    n_outer: int,
    inner_converged: bool,
    rounds: dict[str, int] | None,
    restart_index: int | None,
) -> FitResult:
    gamma = state.gamma
    selected = gamma.active_indices
    names = tuple(data.z_names[k] for k in selected)
    u_hat = random_effect_predictions(data, state.working, gamma, state.theta)
    effects = {
        name: float(sign * value)
        for name, sign, value in zip(names, gamma.signs, u_hat, strict=True)
    }
    report = correlated_neighbors(data, gamma, config.neighbor_threshold)
    notes = [
        *notes,
        *(f"constant column {c} excluded from neighbors" for c in report.excluded),
    ]
    return FitResult(
        gamma_final=gamma,
        theta_final=state.theta,
        loglik_trace=tuple(trace),
        moves=tuple(moves),
        neighbor_report=report,
        refit_summary=refit_summary(data, selected.tolist()),
        warnings=tuple(notes),
        converged=converged,
        n_outer=n_outer,
        inner_converged=inner_converged,
        selected_names=names,
        effects=effects,
        rounds=rounds if rounds is not None else dict.fromkeys(names, 1),
        restart_index=restart_index,
    )


@dataclass(frozen=True, eq=False)
class MultiRunResult:
    """All restarts, the best one by refit AIC and the union of selections."""

    results: tuple[FitResult, ...]
    best_index: int
    union: tuple[int, ...]
    frequencies: dict[int, float]
    union_refit: RefitSummary

    @property
    def best(self) -> FitResult:
        """Restart with the smallest refit AIC (first one on ties)."""
        return self.results[self.best_index]


def _restart(
    args: tuple[Dataset, SelectorConfig, MixtureAssignment, int],
) -> FitResult:
    data, config, gamma_init, index = args
    rng = make_rng(child_seed(config.rng_seed, index))
    return run(data, config, gamma_init, rng=rng, restart_index=index)


def multi_run(
    data: Dataset,
    config: SelectorConfig,
    gamma_init: MixtureAssignment | ArrayLike | None = None,
    workers: int | None = None,
) -> MultiRunResult:
    """Independent restarts of ``run``, seeded from ``config.rng_seed``.

    Restart i uses the generator addressed by child seed i, so results do not
    depend on the worker count. With one restart the result equals ``run``.
    """
    if config.mode is SelectionMode.GREEDY and config.n_restarts > 1:
        logger.warning(
            "Greedy restarts from one start are identical; use weighted mode"
        )
    start = initialize_gamma(data, config, gamma_init)
    jobs = [(data, config, start, i) for i in range(config.n_restarts)]
    n_workers = min(workers if workers is not None else worker_count(), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(
                tqdm(pool.map(_restart, jobs), total=len(jobs), desc="restarts")
            )
    else:
        results = [
            _restart(job)
            for job in tqdm(jobs, desc="restarts", disable=len(jobs) == 1)
        ]

    aics = [r.refit_summary.aic for r in results]
    best_index = int(np.nanargmin(aics)) if np.any(np.isfinite(aics)) else 0
    counts: dict[int, int] = {}
    for result in results:
        for k in result.selected:
            counts[k] = counts.get(k, 0) + 1
    union = tuple(sorted(counts))
    logger.info(
        "%d restarts: best #%d (AIC %.4g), union of %d columns",
        len(results),
        best_index,
        aics[best_index],
        len(union),
    )
    return MultiRunResult(
        results=tuple(results),
        best_index=best_index,
        union=union,
        frequencies={k: counts[k] / len(results) for k in union},
        union_refit=refit_summary(data, list(union)),
    )


def sequential_fit(
    data: Dataset,
    config: SelectorConfig,
    max_rounds: int | None = None,
    gamma_init: MixtureAssignment | ArrayLike | None = None,
) -> FitResult:
    """Fit, lock the selected columns into X, and repeat on the rest.

    Every round re-screens the remaining columns. Stops when a round selects
    nothing or after ``max_rounds``. The returned result refers to the columns
    of ``data``; its parameters come from one M-step at the union of all
    rounds' labels, and ``rounds`` maps each selected name to its round.
    """
    limit = max_rounds if max_rounds is not None else config.max_rounds
    if limit < 1:
        raise ValidationError(f"max_rounds must be >= 1, got {limit}")
    original = {name: k for k, name in enumerate(data.z_names)}
    labels: dict[int, int] = {}
    rounds: dict[str, int] = {}
    trace: list[float] = []
    moves: list[Move] = []
    notes: list[str] = []
    converged, inner_converged, n_outer = True, True, 0

    later = (
        config.model_copy(update={"init_strategy": InitStrategy.BH_SCREEN})
        if config.init_strategy is InitStrategy.USER_PROVIDED
        else config
    )
    current = data
    for round_number in range(1, limit + 1):
        if round_number == 1:
            start = initialize_gamma(current, config, gamma_init)
        else:
            start = initialize_gamma(current, later)
        result = run(current, config, start)
        trace.extend(result.loglik_trace)
        notes.extend(f"round {round_number}: {w}" for w in result.warnings)
        converged = converged and result.converged
        inner_converged = inner_converged and result.inner_converged
        n_outer += result.n_outer
        moves.extend(
            Move(
                iteration=m.iteration,
                k=original[current.z_names[m.k]],
                old=m.old,
                new=m.new,
                delta=m.delta,
                round=round_number,
            )
            for m in result.moves
        )
        chosen = result.selected
        logger.info("Round %d selected %d columns", round_number, len(chosen))
        if not chosen:
            break
        for k, sign in zip(chosen, result.gamma_final.signs, strict=True):
            name = current.z_names[k]
            labels[original[name]] = int(sign)
            rounds[name] = round_number
        current, renames = current.promote(chosen)
        for old_name, new_name in renames.items():
            message = (
                f"round {round_number}: locked-in column {old_name} "
                f"renamed {new_name}"
            )
            notes.append(message)
            logger.warning("%s", message)
        if current.K == 0:
            break

    gamma = MixtureAssignment.from_labels(data.K, labels)
    final = _initial_state(data, config, gamma)
    trace.append(final.loglik)
    return _finish(
        data,
        config,
        final,
        trace=trace,
        moves=moves,
        notes=notes,
        converged=converged,
        n_outer=n_outer,
        inner_converged=inner_converged and final.inner_converged,
        rounds=rounds,
        restart_index=None,
    )


def correlated_neighbors(
    data: Dataset, gamma_final: MixtureAssignment, threshold: float
) -> NeighborReport:
    """Putative columns with |corr| >= ``threshold`` to each selected column.

    Constant columns have no defined correlation and are left out with a
    warning.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must lie in [0, 1], got {threshold}")
    selected = gamma_final.active_indices
    if selected.size == 0 or data.N < 2:
        return NeighborReport()

    centered = data.Z - data.Z.mean(axis=0)
    scale = np.sqrt(np.einsum("ij,ij->j", centered, centered))
    constant = scale <= 1e-12 * max(float(np.max(scale, initial=0.0)), 1.0)
    excluded = tuple(data.z_names[k] for k in np.flatnonzero(constant))
    if excluded:
        logger.warning(
            "Constant columns excluded from the neighbor report: %s", excluded
        )

    unit = np.divide(centered, scale, out=np.zeros_like(centered), where=~constant)
    correlations = unit[:, selected].T @ unit
    neighbors: dict[int, tuple[Neighbor, ...]] = {}
    for row, k in enumerate(selected.tolist()):
        if constant[k]:
            continue
        close = np.abs(correlations[row]) >= threshold - 1e-12
        close[k] = False
        close &= ~constant
        neighbors[k] = tuple(
            Neighbor(
                index=j,
                name=data.z_names[j],
                correlation=float(correlations[row, j]),
            )
            for j in np.flatnonzero(close).tolist()
        )
    return NeighborReport(
        neighbors=neighbors,
        names={k: data.z_names[k] for k in selected.tolist()},
        excluded=excluded,
    )
