"""Data models for infdpp."""

import math
from enum import StrEnum
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator


class Interval(BaseModel):
    """A bounded interval [lo, hi] of the real line."""

    model_config = ConfigDict(frozen=True)

    lo: float = Field(allow_inf_nan=False)
    hi: float = Field(allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_order(self) -> Self:
        if not self.lo < self.hi:
            raise ValueError(f"degenerate interval: lo={self.lo} must be < hi={self.hi}")
        return self

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


class Grading(StrEnum):
    """Panel layout of a composite rule."""

    UNIFORM = "uniform"
    GEOMETRIC_TOWARD_LO = "geometric_toward_lo"
    GEOMETRIC_TOWARD_HI = "geometric_toward_hi"


class BesselOrder(BaseModel):
    """Order of a Bessel function of the first kind."""

    model_config = ConfigDict(frozen=True)

    nu: float = Field(gt=-1, allow_inf_nan=False)


class JacobiParams(BaseModel):
    """Degree and weight exponent of P_n^{(s, 0)} on [-1, 1]."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=0)
    s: float = Field(gt=-1, allow_inf_nan=False)


class KernelFamily(StrEnum):
    BESSEL_J = "bessel_j"
    MODIFIED_BESSEL_K = "modified_bessel_k"
    PICKRELL_RADIAL = "pickrell_radial"
    CD_JACOBI = "cd_jacobi"


class KernelSpec(BaseModel):
    """A member of one of the parametric kernel families.

    ``s`` is the Bessel/Jacobi parameter, ``n`` the matrix size of the Pickrell radial
    kernel, ``N`` the rank of the Christoffel-Darboux kernel and ``sub`` its support.
    """

    model_config = ConfigDict(frozen=True)

    family: KernelFamily
    s: float = Field(allow_inf_nan=False)
    n: int | None = None
    N: int | None = None
    sub: Interval | None = None

    @model_validator(mode="before")
    @classmethod
    def _default_support(cls, data: object) -> object:
        if isinstance(data, dict) and data.get("family") in (KernelFamily.CD_JACOBI, "cd_jacobi"):
            if data.get("sub") is None:
                data = {**data, "sub": Interval(lo=-1.0, hi=1.0)}
        return data

    @model_validator(mode="after")
    def _check_family(self) -> Self:
        match self.family:
            case KernelFamily.BESSEL_J | KernelFamily.MODIFIED_BESSEL_K:
                if self.s <= -1:
                    raise ValueError(f"{self.family} requires s > -1, got {self.s}")
            case KernelFamily.PICKRELL_RADIAL:
                if self.n is None or self.n < 1:
                    raise ValueError("pickrell_radial requires n >= 1")
                if 2 * self.n + self.s <= 1:
                    raise ValueError(f"pickrell_radial requires 2n + s > 1, got n={self.n}")
            case KernelFamily.CD_JACOBI:
                if self.N is None or self.N < 1:
                    raise ValueError("cd_jacobi requires N >= 1")
                assert self.sub is not None
                if not Interval(lo=-1.0, hi=1.0).contains(self.sub):
                    raise ValueError(f"cd_jacobi support {self.sub} must lie in [-1, 1]")
                # the induced weight is integrable away from u = 1 for every s
                if self.sub.hi >= 1.0 and self.s <= -1:
                    raise ValueError("cd_jacobi on a support reaching u = 1 requires s > -1")
        return self

    @classmethod
    def bessel_j(cls, s: float) -> "KernelSpec":
        return cls(family=KernelFamily.BESSEL_J, s=s)

    @classmethod
    def modified_bessel_k(cls, s: float) -> "KernelSpec":
        return cls(family=KernelFamily.MODIFIED_BESSEL_K, s=s)

    @classmethod
    def pickrell_radial(cls, n: int, s: float) -> "KernelSpec":
        return cls(family=KernelFamily.PICKRELL_RADIAL, n=n, s=s)

    @classmethod
    def cd_jacobi(cls, N: int, s: float, sub: Interval | None = None) -> "KernelSpec":
        return cls(family=KernelFamily.CD_JACOBI, N=N, s=s, sub=sub)

    @property
    def domain(self) -> tuple[float, float]:
        """Open natural domain of the kernel's arguments."""
        if self.family is KernelFamily.CD_JACOBI:
            return (-1.0, 1.0)
        return (0.0, math.inf)


class Configuration(BaseModel):
    """A finite configuration drawn on a quadrature: node positions and their indices."""

    model_config = ConfigDict(frozen=True)

    points: tuple[float, ...] = ()
    indices: tuple[int, ...] = ()

    @model_validator(mode="after")
    def _check_sorted(self) -> Self:
        if len(self.points) != len(self.indices):
            raise ValueError("points and indices must have equal length")
        if any(b < a for a, b in zip(self.points, self.points[1:], strict=False)):
            raise ValueError("configuration points must be sorted ascending")
        return self

    @computed_field
    @property
    def cardinality(self) -> int:
        return len(self.points)

    def count_in(self, mask: np.ndarray) -> int:
        """Number of particles sitting on nodes selected by ``mask``."""
        return int(sum(bool(mask[i]) for i in self.indices))


class SeededRng(BaseModel):
    """Counter-based random stream: identical (seed, stream) gives identical draws."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream: int = Field(default=0, ge=0)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(sequence))

    def spawn(self, count: int) -> list["SeededRng"]:
        """Independent child streams, deterministic in (seed, stream, count)."""
        base = self.stream * 1_000_003
        return [SeededRng(seed=self.seed, stream=base + k + 1) for k in range(count)]


class OPEnsembleSpec(BaseModel):
    """Infinite orthogonal polynomial ensemble with weight (1-u)^s on [a, b).

    ``b1`` is the cut point: the induced measure on [a, b1] is finite.
    """

    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=1)
    s: float = Field(allow_inf_nan=False)
    domain: Interval = Interval(lo=-1.0, hi=1.0)
    b1: float = Field(allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_cut(self) -> Self:
        if not self.domain.lo < self.b1 < self.domain.hi:
            raise ValueError(f"cut point b1={self.b1} must lie inside {self.domain}")
        if self.domain.lo <= -1.0 - 1e-15 or self.domain.hi > 1.0:
            raise ValueError("weight (1-u)^s lives on [-1, 1]")
        return self


class PickrellParams(BaseModel):
    """Matrix size and Pickrell parameter."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    s: float = Field(allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_fibres(self) -> Self:
        if 2 * self.n + self.s <= 1:
            raise ValueError(f"radial density requires 2n + s > 1, got n={self.n}, s={self.s}")
        return self


class BesselPerturbationSpec(BaseModel):
    """The perturbation data of B^(s): n_s, the exponents spanning V^(s), target K^(s+2n_s)."""

    model_config = ConfigDict(frozen=True)

    s: float
    n_s: int = Field(ge=1)
    v_exponents: tuple[float, ...]
    target_s: float
    radius: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_interval(self) -> Self:
        shift = self.s / 2 + self.n_s
        if not -0.5 < shift < 0.5:
            raise ValueError(f"s/2 + n_s = {shift} must lie in (-1/2, 1/2)")
        if len(self.v_exponents) != self.n_s:
            raise ValueError("dim V must equal n_s")
        return self


class AsymptoticPoint(BaseModel):
    """A point (gamma, x) of the Pickrell set."""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(ge=0)
    x: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_pickrell_set(self) -> Self:
        if any(v < 0 for v in self.x):
            raise ValueError("coordinates x must be nonnegative")
        if any(b > a for a, b in zip(self.x, self.x[1:], strict=False)):
            raise ValueError("coordinates x must be nonincreasing")
        total = sum(self.x)
        if self.gamma < total - 1e-9 * max(1.0, total):
            raise ValueError(f"gamma={self.gamma} must dominate sum(x)={total}")
        return self
