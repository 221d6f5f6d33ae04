"""Gaussian complete-data log-likelihood and its M-step.

Everything here works on the working pair (y~, w~) so that normal, binomial
and Poisson fits share one code path. The marginal covariance

    Sigma = phi W^-1 + sigma^2 Z Gamma^2 Z'

is never formed. With U = Z_L Gamma_L (the signed active columns) and the
L x L core C = I + (sigma^2/phi) U'WU, the Woodbury identity gives

    Sigma^-1 = (1/phi) [W - (sigma^2/phi) W U C^-1 U' W]
    log|Sigma| = N log phi - sum(log w) + log|C|

so all costs are O(N L^2) for the state and O(N L K) for a full sweep of
single-coordinate proposals.
"""

from dataclasses import dataclass
import itertools
import logging
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, special

from ..utils.exceptions import (  # noqa: TID252
    RankDeficiencyError,
    SingularCoreError,
    StaleCacheError,
)
from .families import WorkingData
from .structures import (
    LABELS,
    Dataset,
    MixtureAssignment,
    ProbabilityTriple,
    Theta,
    probabilities_from_counts,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

SIGMA2_FLOOR = 1e-12
RANK_TOLERANCE = 1e-10
COLLINEARITY_TOLERANCE = 1e-8
LOG_2PI = float(np.log(2.0 * np.pi))

_versions = itertools.count()


@dataclass(frozen=True, eq=False)
class PrecisionCache:
    """Factorized state of Sigma for one (gamma, phi, sigma^2, working) tuple.

    The cache does not depend on beta or mu, so it stays valid across a
    mean update. Any use against a different state raises StaleCacheError.
    """

    version: int
    gamma_key: bytes
    phi: float
    sigma2: float
    working: WorkingData
    U: FloatArray
    WU: FloatArray
    G: FloatArray
    core: tuple[FloatArray, bool] | None
    log_det_core: float
    rank: int
    span_basis: FloatArray
    Uwy: FloatArray
    UwX: FloatArray

    @property
    def rho(self) -> float:
        """sigma^2 / phi."""
        return self.sigma2 / self.phi

    @property
    def L(self) -> int:  # noqa: N802
        """Number of active columns."""
        return int(self.U.shape[1])

    @property
    def N(self) -> int:  # noqa: N802
        """Number of observations."""
        return int(self.working.w_tilde.shape[0])

    def ensure_current(
        self, gamma: MixtureAssignment, theta: Theta, working: WorkingData
    ) -> None:
        """Raise if the cache was built for a different state."""
        if (
            self.gamma_key != gamma.key()
            or self.phi != theta.phi
            or self.sigma2 != theta.sigma2
            or self.working is not working
        ):
            raise StaleCacheError(
                f"precision cache v{self.version} does not match the current state"
            )

    def solve_core(self, rhs: FloatArray) -> FloatArray:
        """Apply C^-1."""
        if self.core is None:
            return np.zeros_like(rhs)
        return linalg.cho_solve(self.core, rhs)


def build_cache(
    data: Dataset, working: WorkingData, gamma: MixtureAssignment, theta: Theta
) -> PrecisionCache:
    """Factorize the Woodbury core for the given state.

    Raises:
        SingularCoreError: If the core matrix is not numerically positive definite.
    """
    w = working.w_tilde
    active = gamma.active_indices
    U = data.Z[:, active] * gamma.signs  # noqa: N806
    WU = U * w[:, None]  # noqa: N806
    G = U.T @ WU  # noqa: N806
    rho = theta.sigma2 / theta.phi

    core: tuple[FloatArray, bool] | None = None
    log_det_core = 0.0
    if U.shape[1]:
        C = np.eye(U.shape[1]) + rho * G  # noqa: N806
        try:
            core = linalg.cho_factor(C, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularCoreError(
                "Woodbury core is not positive definite; active columns are "
                "numerically degenerate"
            ) from e
        log_det_core = float(2.0 * np.sum(np.log(np.diag(core[0]))))

    rank, span_basis = _span(U * np.sqrt(w)[:, None])
    response = working.y_tilde - data.offset_vector
    return PrecisionCache(
        version=next(_versions),
        gamma_key=gamma.key(),
        phi=theta.phi,
        sigma2=theta.sigma2,
        working=working,
        U=U,
        WU=WU,
        G=G,
        core=core,
        log_det_core=log_det_core,
        rank=rank,
        span_basis=span_basis,
        Uwy=WU.T @ response,
        UwX=WU.T @ data.X,
    )


def _span(scaled: FloatArray) -> tuple[int, FloatArray]:
    """Numerical rank and an orthonormal basis of the column span."""
    if scaled.shape[1] == 0:
        return 0, np.empty((scaled.shape[0], 0))
    left, singular, _ = np.linalg.svd(scaled, full_matrices=False)
    eigen = singular**2
    if eigen[0] <= 0.0:
        return 0, np.empty((scaled.shape[0], 0))
    rank = int(np.sum(eigen > RANK_TOLERANCE * eigen[0]))
    return rank, left[:, :rank]


def sigma_apply_inverse(cache: PrecisionCache, v: FloatArray) -> FloatArray:
    """Return Sigma^-1 v for a vector or a matrix of columns."""
    v = np.asarray(v, dtype=np.float64)
    w = cache.working.w_tilde
    wv = w * v if v.ndim == 1 else w[:, None] * v
    if cache.L == 0 or cache.sigma2 == 0.0:
        return wv / cache.phi
    correction = cache.WU @ cache.solve_core(cache.WU.T @ v)
    return (wv - cache.rho * correction) / cache.phi


def log_det_sigma(cache: PrecisionCache) -> float:
    """log|Sigma| from the L x L factorization."""
    w = cache.working.w_tilde
    return float(
        cache.N * np.log(cache.phi) - np.sum(np.log(w)) + cache.log_det_core
    )


def multinomial_term(counts: tuple[int, int, int], p: ProbabilityTriple) -> float:
    """sum_j n_j log p_j with 0 log 0 = 0; -inf when an occupied p_j is 0."""
    return float(np.sum(special.xlogy(np.asarray(counts, float), np.asarray(p))))


def mean_residual(
    data: Dataset, working: WorkingData, gamma: MixtureAssignment, theta: Theta
) -> FloatArray:
    """y~ - offset - X beta - Z Gamma 1 mu."""
    residual = working.y_tilde - data.offset_vector - data.X @ theta.beta
    if gamma.L:
        residual = residual - theta.mu * (data.Z[:, gamma.active_indices] @ gamma.signs)
    return residual


def _cache_for(
    cache: PrecisionCache | None,
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
) -> PrecisionCache:
    if cache is None:
        return build_cache(data, working, gamma, theta)
    cache.ensure_current(gamma, theta, working)
    return cache


def complete_loglik(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    cache: PrecisionCache | None = None,
) -> float:
    """Gaussian complete-data log-likelihood on the working scale.

    Returns -inf (never NaN) when an occupied component has probability zero.
    """
    mult = multinomial_term(gamma.counts, theta.p)
    if mult == -np.inf:
        return -np.inf
    cache = _cache_for(cache, data, working, gamma, theta)
    residual = mean_residual(data, working, gamma, theta)
    quad = float(residual @ sigma_apply_inverse(cache, residual))
    value = -0.5 * quad - 0.5 * log_det_sigma(cache) + mult - 0.5 * data.N * LOG_2PI
    return value if np.isfinite(value) else -np.inf


def _proposal_deltas(
    cache: PrecisionCache,
    data: Dataset,
    gamma: MixtureAssignment,
    theta: Theta,
    residual: FloatArray,
    quad: float,
    columns: NDArray[np.intp],
) -> FloatArray:
    """Deltas for relabelling each of ``columns`` to -1, 0 and +1.

    Every proposal is a rank-one change of Sigma (or none, for a sign flip)
    plus a shift of the mean, evaluated with Sherman-Morrison and the matrix
    determinant lemma against the frozen cache.
    """
    z = data.Z[:, columns]
    sz = sigma_apply_inverse(cache, z)
    a = np.einsum("ij,ij->j", z, sz)
    c = sz.T @ residual
    old = gamma.gamma[columns].astype(np.float64)

    sqrt_w = cache.working.sqrt_w
    scaled = z * sqrt_w[:, None]
    norm2 = np.einsum("ij,ij->j", scaled, scaled)
    projected = cache.span_basis.T @ scaled
    residual_norm2 = norm2 - np.einsum("ij,ij->j", projected, projected)
    collinear = residual_norm2 <= COLLINEARITY_TOLERANCE * norm2

    with np.errstate(divide="ignore"):
        log_p = np.log(np.asarray(theta.p))
    log_p_old = log_p[old.astype(int) + 1]
    mu, sigma2 = theta.mu, theta.sigma2

    out = np.empty((columns.shape[0], 3))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for slot, new in enumerate(LABELS):
            shift = new - old
            change = new**2 - old**2
            c_new = c - shift * mu * a
            denom = 1.0 + change * sigma2 * a
            quad_new = (
                quad
                - 2.0 * shift * mu * c
                + shift**2 * mu**2 * a
                - change * sigma2 * c_new**2 / denom
            )
            d = (
                -0.5 * (quad_new - quad)
                - 0.5 * np.log(denom)
                + (log_p[new + 1] - log_p_old)
            )
            d[denom <= 0.0] = -np.inf
            d[(old == 0) & (new != 0) & collinear] = -np.inf
            d[old == new] = 0.0
            out[:, slot] = d
    out[np.isnan(out)] = -np.inf
    return out


def candidate_deltas(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    cache: PrecisionCache | None = None,
    chunk_size: int = 512,
) -> FloatArray:
    """All 3K deltas d_{j,k} as a K x 3 array with columns for labels -1, 0, +1.

    Columns are processed in chunks against one frozen cache, so the result
    does not depend on the chunking.
    """
    cache = _cache_for(cache, data, working, gamma, theta)
    residual = mean_residual(data, working, gamma, theta)
    quad = float(residual @ sigma_apply_inverse(cache, residual))
    out = np.empty((data.K, 3))
    for start in range(0, data.K, chunk_size):
        columns = np.arange(start, min(start + chunk_size, data.K))
        out[columns] = _proposal_deltas(
            cache, data, gamma, theta, residual, quad, columns
        )
    if multinomial_term(gamma.counts, theta.p) == -np.inf:
        out[:] = -np.inf
    return out


def delta_loglik(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    k: int,
    j: int,
    cache: PrecisionCache | None = None,
) -> float:
    """Change in complete_loglik from setting only gamma_k to ``j``.

    A proposal that would add a column lying in the span of the active set
    returns -inf rather than raising.
    """
    if int(gamma.gamma[k]) == j:
        return 0.0
    cache = _cache_for(cache, data, working, gamma, theta)
    residual = mean_residual(data, working, gamma, theta)
    quad = float(residual @ sigma_apply_inverse(cache, residual))
    row = _proposal_deltas(
        cache, data, gamma, theta, residual, quad, np.array([k], dtype=np.intp)
    )
    if multinomial_term(gamma.counts, theta.p) == -np.inf:
        return -np.inf
    return float(row[0, j + 1])


def _mean_design(
    data: Dataset, gamma: MixtureAssignment
) -> tuple[FloatArray, list[str], bool]:
    """H = [X, Z Gamma 1]; the mu column is dropped when it is identically zero."""
    names = list(data.x_names)
    if gamma.L == 0:
        return data.X, names, False
    signed_sum = data.Z[:, gamma.active_indices] @ gamma.signs
    if not np.any(signed_sum):
        return data.X, names, False
    return np.column_stack([data.X, signed_sum]), [*names, "mu"], True


def _check_full_rank(
    H: FloatArray,  # noqa: N803
    w: FloatArray,
    names: list[str],
) -> None:
    if H.shape[1] == 0:
        return
    scaled = H * np.sqrt(w)[:, None]
    _, r, pivots = linalg.qr(scaled, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = (
        int(np.sum(diag > RANK_TOLERANCE * diag[0]))
        if diag.size and diag[0] > 0.0
        else 0
    )
    if rank < H.shape[1]:
        offending = [names[i] for i in pivots[rank:]]
        raise RankDeficiencyError("mean design is rank deficient", offending)


def update_beta_mu(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    cache: PrecisionCache | None = None,
) -> tuple[FloatArray, float]:
    """GLS update of (beta, mu): (H' Sigma^-1 H)^-1 H' Sigma^-1 y~.

    Raises:
        RankDeficiencyError: If H lacks full column rank.
    """
    H, names, has_mu = _mean_design(data, gamma)  # noqa: N806
    _check_full_rank(H, working.w_tilde, names)
    if H.shape[1] == 0:
        return np.zeros(0), 0.0
    cache = _cache_for(cache, data, working, gamma, theta)
    response = working.y_tilde - data.offset_vector
    sinv_h = sigma_apply_inverse(cache, H)
    normal = H.T @ sinv_h
    rhs = sinv_h.T @ response
    try:
        solution = linalg.solve(normal, rhs, assume_a="pos")
    except linalg.LinAlgError as e:
        raise RankDeficiencyError("GLS normal equations are singular", names) from e
    if not has_mu:
        return solution, 0.0
    return solution[: data.J], float(solution[-1])


class VarianceTraces(NamedTuple):
    """The tau_e / tau_r quantities of the variance-component update."""

    tau_e: float
    tau_r: float
    rank: int


class VarianceUpdate(NamedTuple):
    """Updated dispersion and nonnull variance."""

    phi: float
    sigma2: float


def variance_traces(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    cache: PrecisionCache | None = None,
) -> VarianceTraces:
    """Evaluate tau_e and tau_r at ``theta`` through the L x L reduction."""
    cache = _cache_for(cache, data, working, gamma, theta)
    phi, sigma2, rho = theta.phi, theta.sigma2, cache.rho
    w = working.w_tilde
    residual = mean_residual(data, working, gamma, theta)
    sinv_e = sigma_apply_inverse(cache, residual)

    # Sigma^-1 W^-1 = (1/phi) [I - rho W U C^-1 U']
    trace_sinv_winv = float(data.N)
    if cache.L and sigma2 > 0.0:
        trace_sinv_winv -= rho * float(np.trace(cache.solve_core(cache.G)))
    trace_sinv_winv /= phi
    tau_e = (
        data.N * phi
        - phi**2 * trace_sinv_winv
        + phi**2 * float(np.sum(sinv_e**2 / w))
    )

    tau_r = 0.0
    if cache.L:
        G = cache.G  # noqa: N806
        ut_sinv_u = (G - rho * G @ cache.solve_core(G)) / phi
        ut_sinv_e = cache.U.T @ sinv_e
        tau_r = (
            cache.L * sigma2
            - sigma2**2 * float(np.trace(ut_sinv_u))
            + sigma2**2 * float(ut_sinv_e @ ut_sinv_e)
        )
    return VarianceTraces(tau_e=tau_e, tau_r=tau_r, rank=cache.rank)


def update_variance_components(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    cache: PrecisionCache | None = None,
) -> VarianceUpdate:
    """One fixed-point step phi = tau_e / N, sigma^2 = tau_r / rank(Z Gamma)."""
    traces = variance_traces(data, working, gamma, theta, cache)
    phi = 1.0 if data.spec.dispersion_known else max(traces.tau_e / data.N, 1e-300)
    sigma2 = max(traces.tau_r / traces.rank, 0.0) if traces.rank > 0 else 0.0
    return VarianceUpdate(phi=phi, sigma2=sigma2)


def update_mixture_probs(
    gamma: MixtureAssignment,
    K: int,  # noqa: N803
) -> ProbabilityTriple:
    """p_j = n_j / K."""
    counts = gamma.counts
    if sum(counts) != K:
        raise ValueError(f"counts {counts} do not sum to K={K}")
    return probabilities_from_counts(counts)


def floor_probabilities(p: ProbabilityTriple, floor: float) -> ProbabilityTriple:
    """Lift every probability to at least ``floor`` and renormalize."""
    if floor <= 0.0:
        return p
    lifted = np.maximum(np.asarray(p), floor)
    return ProbabilityTriple(*(lifted / lifted.sum()).tolist())


@dataclass(frozen=True)
class MStepResult:
    """Outcome of the inner fixed-point loop."""

    theta: Theta
    loglik: float
    trace: tuple[float, ...]
    iterations: int
    converged: bool


def m_step(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta_init: Theta,
    tol: float = 1e-8,
    max_iter: int = 100,
    prob_floor: float = 0.0,
) -> MStepResult:
    """Maximize the complete-data log-likelihood over theta with gamma fixed.

    Cycles the GLS mean update, the variance-component step and the mixture
    probability update until the log-likelihood changes by less than ``tol``.
    The returned theta never has a lower log-likelihood than ``theta_init``.
    """
    if gamma.L == 0:
        theta_init = theta_init.replace(sigma2=0.0, mu=0.0)
    p = floor_probabilities(update_mixture_probs(gamma, data.K), prob_floor)
    phi = 1.0 if data.spec.dispersion_known else theta_init.phi
    sigma2 = theta_init.sigma2
    if gamma.L and sigma2 < SIGMA2_FLOOR:
        signed = data.Z[:, gamma.active_indices]
        weighted_norm = float(np.sum(working.w_tilde[:, None] * signed**2))
        sigma2 = phi * gamma.L / weighted_norm if weighted_norm > 0.0 else 1.0
    theta = theta_init.replace(phi=phi, sigma2=sigma2, p=p)

    start = complete_loglik(data, working, gamma, theta_init)
    best_theta, best_ll = theta_init, start
    trace: list[float] = []
    previous = -np.inf
    converged = False
    iterations = 0
    cache = build_cache(data, working, gamma, theta)
    for iterations in range(1, max_iter + 1):  # noqa: B007
        beta, mu = update_beta_mu(data, working, gamma, theta, cache)
        theta = theta.replace(beta=beta, mu=mu)
        phi, sigma2 = update_variance_components(data, working, gamma, theta, cache)
        if cache.rank == 0:
            sigma2, mu = 0.0, 0.0
        elif sigma2 < SIGMA2_FLOOR:
            sigma2 = SIGMA2_FLOOR
        theta = theta.replace(phi=phi, sigma2=sigma2, mu=mu)
        cache = build_cache(data, working, gamma, theta)
        loglik = complete_loglik(data, working, gamma, theta, cache)
        trace.append(loglik)
        if loglik < previous - 1e-8 * max(1.0, abs(previous)):
            logger.debug(
                "M-step log-likelihood decreased from %.10g to %.10g", previous, loglik
            )
        if loglik >= best_ll:
            best_theta, best_ll = theta, loglik
        if abs(loglik - previous) < tol:
            converged = True
            break
        previous = loglik

    if not converged:
        logger.warning(
            "M-step stopped after %d iterations without reaching tol=%g",
            iterations,
            tol,
        )
    return MStepResult(
        theta=best_theta,
        loglik=best_ll,
        trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )


def random_effect_predictions(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    cache: PrecisionCache | None = None,
) -> FloatArray:
    """Conditional means E[u_k | y] of the active random effects.

    u_hat = mu 1 + sigma^2 Gamma_L Z_L' Sigma^-1 (y~ - offset - X beta - Z Gamma 1 mu);
    the signed effect of active column k on the linear predictor is gamma_k u_hat_k.
    """
    if gamma.L == 0:
        return np.zeros(0)
    cache = _cache_for(cache, data, working, gamma, theta)
    residual = mean_residual(data, working, gamma, theta)
    return theta.mu + theta.sigma2 * (cache.U.T @ sigma_apply_inverse(cache, residual))


def fitted_linear_predictor(
    data: Dataset,
    working: WorkingData,
    gamma: MixtureAssignment,
    theta: Theta,
    cache: PrecisionCache | None = None,
) -> FloatArray:
    """offset + X beta + Z_L Gamma_L u_hat."""
    eta = data.offset_vector + data.X @ theta.beta
    if gamma.L:
        u_hat = random_effect_predictions(data, working, gamma, theta, cache)
        eta = eta + (data.Z[:, gamma.active_indices] * gamma.signs) @ u_hat
    return eta
