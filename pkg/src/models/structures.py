"""Core data structures: the dataset, the latent labels and the parameters."""

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..utils.exceptions import ValidationError  # noqa: TID252
from .families import FamilySpec

FloatArray = NDArray[np.float64]

LABELS: tuple[int, int, int] = (-1, 0, 1)


class ProbabilityTriple(NamedTuple):
    """Mixture probabilities (p_L, p_0, p_R)."""

    left: float
    null: float
    right: float

    def for_label(self, label: int) -> float:
        """Probability of the component with label -1, 0 or +1."""
        return self[label + 1]


def _as_matrix(values: ArrayLike, n: int) -> FloatArray:
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(n, -1) if matrix.size else np.empty((n, 0))
    if matrix.ndim != 2 or matrix.shape[0] != n:
        raise ValidationError(f"design matrix must have {n} rows, got {matrix.shape}")
    return matrix


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response, locked-in design X, putative design Z and the family.

    ``offset`` is a fixed part of the linear predictor with coefficient one.
    """

    y: FloatArray
    X: FloatArray
    Z: FloatArray
    spec: FamilySpec
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    offset: FloatArray | None = None

    def __post_init__(self) -> None:
        """Coerce arrays, fill default names and validate."""
        y = np.asarray(self.y, dtype=np.float64)
        n = y.shape[0]
        X = _as_matrix(self.X, n)  # noqa: N806
        Z = _as_matrix(self.Z, n)  # noqa: N806
        offset = (
            np.zeros(n)
            if self.offset is None
            else np.asarray(self.offset, dtype=np.float64)
        )
        x_names = tuple(self.x_names) or tuple(f"X{j + 1}" for j in range(X.shape[1]))
        z_names = tuple(self.z_names) or tuple(f"Z{k + 1}" for k in range(Z.shape[1]))

        if y.ndim != 1:
            raise ValidationError("y must be a vector")
        if offset.shape != (n,):
            raise ValidationError("offset must have one entry per observation")
        if self.spec.n != n:
            raise ValidationError("prior weights and response lengths differ")
        if len(x_names) != X.shape[1] or len(z_names) != Z.shape[1]:
            raise ValidationError("column names do not match the design widths")
        for name, block in (("y", y), ("X", X), ("Z", Z), ("offset", offset)):
            if not np.all(np.isfinite(block)):
                raise ValidationError(f"{name} contains missing or non-finite values")
        duplicates = [c for c, count in Counter(x_names + z_names).items() if count > 1]
        if duplicates:
            raise ValidationError(f"duplicate column names: {duplicates}")
        self.spec.family.validate_response(y)

        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "z_names", z_names)

    @property
    def N(self) -> int:  # noqa: N802
        """Number of observations."""
        return int(self.y.shape[0])

    @property
    def J(self) -> int:  # noqa: N802
        """Number of locked-in columns."""
        return int(self.X.shape[1])

    @property
    def K(self) -> int:  # noqa: N802
        """Number of putative columns."""
        return int(self.Z.shape[1])

    @property
    def offset_vector(self) -> FloatArray:
        """The offset as a concrete array."""
        assert self.offset is not None  # noqa: S101
        return self.offset

    def promote(self, indices: Sequence[int]) -> tuple["Dataset", dict[str, str]]:
        """Move putative columns into the locked-in design.

        Returns the reduced dataset and a map from original names to the names
        used in X, which differ only when a name was already taken.
        """
        chosen = sorted(set(indices))
        keep = [k for k in range(self.K) if k not in set(chosen)]
        taken = set(self.x_names) | {self.z_names[k] for k in keep}
        renames: dict[str, str] = {}
        new_names = []
        for k in chosen:
            name = self.z_names[k]
            candidate, suffix = name, 1
            while candidate in taken:
                candidate = f"{name}_locked{suffix}"
                suffix += 1
            taken.add(candidate)
            if candidate != name:
                renames[name] = candidate
            new_names.append(candidate)
        reduced = replace(
            self,
            X=np.column_stack([self.X, self.Z[:, chosen]]),
            Z=self.Z[:, keep],
            x_names=self.x_names + tuple(new_names),
            z_names=tuple(self.z_names[k] for k in keep),
        )
        return reduced, renames


@dataclass(frozen=True, eq=False)
class MixtureAssignment:
    """Latent labels gamma in {-1, 0, +1}^K."""

    gamma: NDArray[np.int8]
    _active: NDArray[np.intp] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Validate labels and cache the active set."""
        raw = np.asarray(self.gamma)
        if raw.ndim != 1:
            raise ValidationError("gamma must be a vector")
        if not np.all(np.isin(raw, LABELS)):
            raise ValidationError("gamma entries must be -1, 0 or +1")
        gamma = raw.astype(np.int8)
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "_active", np.flatnonzero(gamma))

    @classmethod
    def zeros(cls, k: int) -> "MixtureAssignment":
        """All-null assignment."""
        return cls(np.zeros(k, dtype=np.int8))

    @classmethod
    def from_labels(cls, k: int, labels: dict[int, int]) -> "MixtureAssignment":
        """Assignment with the given ``{index: label}`` entries, null elsewhere."""
        gamma = np.zeros(k, dtype=np.int8)
        for index, label in labels.items():
            gamma[index] = label
        return cls(gamma)

    @property
    def K(self) -> int:  # noqa: N802
        """Number of putative predictors."""
        return int(self.gamma.shape[0])

    @property
    def counts(self) -> tuple[int, int, int]:
        """(n_-1, n_0, n_+1)."""
        n_left = int(np.sum(self.gamma == -1))
        n_right = int(np.sum(self.gamma == 1))
        return n_left, self.K - n_left - n_right, n_right

    @property
    def active_indices(self) -> NDArray[np.intp]:
        """Ascending indices with a non-null label."""
        return self._active

    @property
    def signs(self) -> FloatArray:
        """Labels of the active predictors as floats."""
        return self.gamma[self._active].astype(np.float64)

    @property
    def L(self) -> int:  # noqa: N802
        """Size of the active set."""
        return int(self._active.shape[0])

    def with_label(self, k: int, label: int) -> "MixtureAssignment":
        """Copy with only coordinate ``k`` relabelled."""
        gamma = self.gamma.copy()
        gamma[k] = label
        return MixtureAssignment(gamma)

    def key(self) -> bytes:
        """Hashable fingerprint of the labels."""
        return self.gamma.tobytes()

    def __eq__(self, other: object) -> bool:
        """Labelwise equality."""
        if not isinstance(other, MixtureAssignment):
            return NotImplemented
        return bool(np.array_equal(self.gamma, other.gamma))

    def __hash__(self) -> int:
        """Hash of the label bytes."""
        return hash(self.key())


@dataclass(frozen=True, eq=False)
class Theta:
    """Model parameters {beta, mu, sigma^2, phi, p}."""

    beta: FloatArray
    mu: float
    sigma2: float
    phi: float
    p: ProbabilityTriple

    def __post_init__(self) -> None:
        """Validate ranges."""
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        p = ProbabilityTriple(*(float(v) for v in self.p))
        if self.sigma2 < 0.0:
            raise ValidationError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not self.phi > 0.0:
            raise ValidationError(f"phi must be > 0, got {self.phi}")
        if any(v < 0.0 or v > 1.0 for v in p) or not np.isclose(sum(p), 1.0):
            raise ValidationError(f"mixture probabilities must form a simplex: {p}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "p", p)

    @classmethod
    def initial(cls, j: int, gamma: MixtureAssignment) -> "Theta":
        """Neutral starting point: beta = 0, unit dispersion, empirical p."""
        return cls(
            beta=np.zeros(j),
            mu=0.0,
            sigma2=0.0,
            phi=1.0,
            p=probabilities_from_counts(gamma.counts),
        )

    def replace(self, **changes: object) -> "Theta":
        """Copy with some fields changed."""
        return replace(self, **changes)  # type: ignore[arg-type]

    def fingerprint(self) -> tuple[float, ...]:
        """Exact tuple of every parameter value."""
        return (*self.beta.tolist(), self.mu, self.sigma2, self.phi, *self.p)


def probabilities_from_counts(counts: Iterable[int]) -> ProbabilityTriple:
    """Maximum-likelihood mixture probabilities n_j / K."""
    values = [int(c) for c in counts]
    total = sum(values)
    if total <= 0:
        raise ValidationError("counts must sum to a positive K")
    return ProbabilityTriple(*(c / total for c in values))


def as_assignment(gamma: "MixtureAssignment | ArrayLike") -> MixtureAssignment:
    """Accept either an assignment or a raw label vector."""
    if isinstance(gamma, MixtureAssignment):
        return gamma
    return MixtureAssignment(np.asarray(gamma))
