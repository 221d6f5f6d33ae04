"""Exponential-dispersion families with canonical links.

Each family supplies the link g, its inverse, the cumulant generator b, the
variance function V and the base measure c(y, phi/m). ``working_response``
linearizes a non-Gaussian response around the current fitted means so that
the Gaussian complete-data likelihood can be evaluated on the pair
(working response, iterative weights).
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import StrEnum
import logging

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse, special

from ..utils.exceptions import DomainError, ValidationError  # noqa: TID252

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

MEAN_CLAMP = 1e-10


class FamilyId(StrEnum):
    """Supported response families."""

    NORMAL = "normal"
    BINOMIAL = "binomial"
    POISSON = "poisson"


class Family(ABC):
    """Canonical-link exponential-dispersion family."""

    name: FamilyId
    dispersion_known: bool

    @abstractmethod
    def linkfun(self, mu: FloatArray) -> FloatArray:
        """Canonical link eta = g(mu)."""

    @abstractmethod
    def linkinv(self, eta: FloatArray) -> FloatArray:
        """Inverse link mu = g^-1(eta) = b'(eta)."""

    @abstractmethod
    def link_derivative(self, mu: FloatArray) -> FloatArray:
        """Derivative g'(mu); equals 1 / V(mu) for canonical links."""

    @abstractmethod
    def variance(self, mu: FloatArray) -> FloatArray:
        """Variance function V(mu) = b''(g(mu))."""

    @abstractmethod
    def cumulant(self, eta: FloatArray) -> FloatArray:
        """Cumulant generator b(eta)."""

    @abstractmethod
    def log_base_measure(
        self, y: FloatArray, phi: float, weights: FloatArray
    ) -> FloatArray:
        """Per-observation c(y, phi / m)."""

    @abstractmethod
    def unit_deviance(self, y: FloatArray, mu: FloatArray) -> FloatArray:
        """Per-observation deviance contribution (before prior weights)."""

    def in_mean_domain(self, mu: FloatArray) -> NDArray[np.bool_]:
        """Return which means lie strictly inside the mean domain."""
        return np.isfinite(mu)

    def clamp_mean(self, mu: FloatArray) -> FloatArray:
        """Pull means away from the domain boundary."""
        return mu

    def validate_response(self, y: FloatArray) -> None:
        """Raise if any response is outside the family's support."""
        if not np.all(np.isfinite(y)):
            raise ValidationError(f"{self.name} responses must be finite")

    def initial_means(
        self,
        y: FloatArray,
        weights: FloatArray,  # noqa: ARG002
    ) -> FloatArray:
        """Starting fitted means derived from the responses."""
        return y.astype(np.float64, copy=True)


class Gaussian(Family):
    """Normal family, identity link."""

    name = FamilyId.NORMAL
    dispersion_known = False

    def linkfun(self, mu: FloatArray) -> FloatArray:
        """Identity."""
        return mu

    def linkinv(self, eta: FloatArray) -> FloatArray:
        """Identity."""
        return eta

    def link_derivative(self, mu: FloatArray) -> FloatArray:
        """Constant one."""
        return np.ones_like(mu)

    def variance(self, mu: FloatArray) -> FloatArray:
        """Constant one."""
        return np.ones_like(mu)

    def cumulant(self, eta: FloatArray) -> FloatArray:
        """eta^2 / 2."""
        return 0.5 * eta**2

    def log_base_measure(
        self, y: FloatArray, phi: float, weights: FloatArray
    ) -> FloatArray:
        """-y^2 m / (2 phi) - log(2 pi phi / m) / 2."""
        scale = phi / weights
        return -(y**2) / (2.0 * scale) - 0.5 * np.log(2.0 * np.pi * scale)

    def unit_deviance(self, y: FloatArray, mu: FloatArray) -> FloatArray:
        """Squared error."""
        return (y - mu) ** 2


class Binomial(Family):
    """Binomial family on the proportion scale, logit link."""

    name = FamilyId.BINOMIAL
    dispersion_known = True

    def linkfun(self, mu: FloatArray) -> FloatArray:
        """Logit."""
        return special.logit(mu)

    def linkinv(self, eta: FloatArray) -> FloatArray:
        """Logistic."""
        return special.expit(eta)

    def link_derivative(self, mu: FloatArray) -> FloatArray:
        """1 / (mu (1 - mu))."""
        return 1.0 / (mu * (1.0 - mu))

    def variance(self, mu: FloatArray) -> FloatArray:
        """mu (1 - mu)."""
        return mu * (1.0 - mu)

    def cumulant(self, eta: FloatArray) -> FloatArray:
        """log(1 + exp(eta)) evaluated as a log-sum-exp."""
        return np.logaddexp(0.0, eta)

    def log_base_measure(
        self,
        y: FloatArray,
        phi: float,  # noqa: ARG002
        weights: FloatArray,
    ) -> FloatArray:
        """Log binomial coefficient log C(m, m y)."""
        successes = weights * y
        return (
            special.gammaln(weights + 1.0)
            - special.gammaln(successes + 1.0)
            - special.gammaln(weights - successes + 1.0)
        )

    def unit_deviance(self, y: FloatArray, mu: FloatArray) -> FloatArray:
        """2 [y log(y/mu) + (1-y) log((1-y)/(1-mu))]."""
        return 2.0 * (
            special.xlogy(y, y) - special.xlogy(y, mu)
            + special.xlogy(1.0 - y, 1.0 - y) - special.xlogy(1.0 - y, 1.0 - mu)
        )

    def in_mean_domain(self, mu: FloatArray) -> NDArray[np.bool_]:
        """0 < mu < 1."""
        return (mu > 0.0) & (mu < 1.0)

    def clamp_mean(self, mu: FloatArray) -> FloatArray:
        """Clamp to [1e-10, 1 - 1e-10]."""
        return np.clip(mu, MEAN_CLAMP, 1.0 - MEAN_CLAMP)

    def validate_response(self, y: FloatArray) -> None:
        """Proportions must lie in [0, 1]."""
        super().validate_response(y)
        if np.any((y < 0.0) | (y > 1.0)):
            raise ValidationError(
                "binomial responses must lie in [0, 1] after division by the "
                "trial counts"
            )

    def initial_means(self, y: FloatArray, weights: FloatArray) -> FloatArray:
        """(m y + 1/2) / (m + 1)."""
        return (weights * y + 0.5) / (weights + 1.0)


class Poisson(Family):
    """Poisson family, log link."""

    name = FamilyId.POISSON
    dispersion_known = True

    def linkfun(self, mu: FloatArray) -> FloatArray:
        """Log."""
        return np.log(mu)

    def linkinv(self, eta: FloatArray) -> FloatArray:
        """Exp."""
        return np.exp(eta)

    def link_derivative(self, mu: FloatArray) -> FloatArray:
        """1 / mu."""
        return 1.0 / mu

    def variance(self, mu: FloatArray) -> FloatArray:
        """mu."""
        return mu

    def cumulant(self, eta: FloatArray) -> FloatArray:
        """exp(eta)."""
        return np.exp(eta)

    def log_base_measure(
        self,
        y: FloatArray,
        phi: float,  # noqa: ARG002
        weights: FloatArray,  # noqa: ARG002
    ) -> FloatArray:
        """-log(y!)."""
        return -special.gammaln(y + 1.0)

    def unit_deviance(self, y: FloatArray, mu: FloatArray) -> FloatArray:
        """2 [y log(y/mu) - (y - mu)]."""
        return 2.0 * (special.xlogy(y, y) - special.xlogy(y, mu) - (y - mu))

    def in_mean_domain(self, mu: FloatArray) -> NDArray[np.bool_]:
        """mu > 0."""
        return mu > 0.0

    def clamp_mean(self, mu: FloatArray) -> FloatArray:
        """Clamp to [1e-10, inf)."""
        return np.maximum(mu, MEAN_CLAMP)

    def validate_response(self, y: FloatArray) -> None:
        """Counts must be nonnegative."""
        super().validate_response(y)
        if np.any(y < 0.0):
            raise ValidationError("poisson responses must be nonnegative")

    def initial_means(
        self,
        y: FloatArray,
        weights: FloatArray,  # noqa: ARG002
    ) -> FloatArray:
        """y + 0.1."""
        return y + 0.1


_FAMILIES: dict[FamilyId, Family] = {
    FamilyId.NORMAL: Gaussian(),
    FamilyId.BINOMIAL: Binomial(),
    FamilyId.POISSON: Poisson(),
}


def get_family(family_id: FamilyId | str) -> Family:
    """Look up the family object for an identifier."""
    try:
        return _FAMILIES[FamilyId(family_id)]
    except ValueError as e:
        raise ValidationError(f"Unknown family '{family_id}'") from e


@dataclass(frozen=True, eq=False)
class FamilySpec:
    """A family together with the known prior weights m_i."""

    family_id: FamilyId
    prior_weights: FloatArray

    def __post_init__(self) -> None:
        """Coerce and check the prior weights."""
        weights = np.asarray(self.prior_weights, dtype=np.float64)
        if weights.ndim != 1:
            raise ValidationError("prior_weights must be a vector")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0.0):
            raise ValidationError("prior_weights must be strictly positive and finite")
        object.__setattr__(self, "family_id", FamilyId(self.family_id))
        object.__setattr__(self, "prior_weights", weights)

    @classmethod
    def create(
        cls, family_id: FamilyId | str, n: int, weights: ArrayLike | None = None
    ) -> "FamilySpec":
        """Build a spec with unit weights unless weights are given."""
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValidationError(f"expected {n} prior weights, got shape {w.shape}")
        return cls(FamilyId(family_id), w)

    @property
    def family(self) -> Family:
        """The family implementation."""
        return _FAMILIES[self.family_id]

    @property
    def dispersion_known(self) -> bool:
        """True when phi is fixed at one."""
        return self.family.dispersion_known

    @property
    def n(self) -> int:
        """Number of observations the weights cover."""
        return int(self.prior_weights.shape[0])


@dataclass(frozen=True, eq=False)
class WorkingData:
    """Working response and iterative weights on the linear-predictor scale."""

    y_tilde: FloatArray
    w_tilde: FloatArray
    clamped: bool = field(default=False)

    @property
    def W(self) -> sparse.dia_matrix:  # noqa: N802
        """Diagonal weight matrix."""
        return sparse.diags(self.w_tilde)

    @property
    def sqrt_w(self) -> FloatArray:
        """Elementwise square root of the weights."""
        return np.sqrt(self.w_tilde)


def link(spec: FamilySpec, lam: ArrayLike) -> FloatArray:
    """Apply the canonical link, rejecting means outside the domain.

    Raises:
        DomainError: If any mean lies outside the family's mean domain.
    """
    mu = np.asarray(lam, dtype=np.float64)
    family = spec.family
    if not np.all(family.in_mean_domain(mu)):
        raise DomainError(f"mean value outside the {family.name} domain")
    return family.linkfun(mu)


def inverse_link(spec: FamilySpec, eta: ArrayLike) -> FloatArray:
    """Map linear predictors to means."""
    return spec.family.linkinv(np.asarray(eta, dtype=np.float64))


def cumulant(spec: FamilySpec, eta: ArrayLike) -> FloatArray:
    """Evaluate the cumulant generator b(eta)."""
    values = np.asarray(eta, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DomainError("linear predictor must be finite")
    return spec.family.cumulant(values)


def initial_means(spec: FamilySpec, y: ArrayLike) -> FloatArray:
    """Starting fitted means for the first working-response computation."""
    values = np.asarray(y, dtype=np.float64)
    return spec.family.initial_means(values, spec.prior_weights)


def working_response(
    spec: FamilySpec, y: ArrayLike, lambda_tilde: ArrayLike
) -> WorkingData:
    """Linearize the response around the fitted means ``lambda_tilde``.

    Computes y~ = g(l) + g'(l)(y - l) and w~ = m / g'(l) componentwise. Means
    at the domain boundary are clamped first and the result is flagged.
    """
    family = spec.family
    y_arr = np.asarray(y, dtype=np.float64)
    weights = spec.prior_weights
    if family.name is FamilyId.NORMAL:
        return WorkingData(y_tilde=y_arr.copy(), w_tilde=weights.copy())

    lam = np.asarray(lambda_tilde, dtype=np.float64)
    clamped_lam = family.clamp_mean(lam)
    clamped = bool(np.any(clamped_lam != lam))
    if clamped:
        logger.warning(
            "Clamped %d fitted means to the %s domain before computing weights",
            int(np.sum(clamped_lam != lam)),
            family.name,
        )
    derivative = family.link_derivative(clamped_lam)
    y_tilde = family.linkfun(clamped_lam) + derivative * (y_arr - clamped_lam)
    w_tilde = weights / derivative
    return WorkingData(y_tilde=y_tilde, w_tilde=w_tilde, clamped=clamped)
