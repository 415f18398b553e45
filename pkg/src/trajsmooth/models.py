"""Model containers: birth intensity, measurement model, clutter model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .gaussians import GaussianMixture


@dataclass(frozen=True)
class BirthModel:
    """Poisson birth intensity: a Gaussian mixture plus an optional constant level.

    `uniform_density` is a spatially uniform intensity value added to pointwise
    evaluations; it supports configurations whose birth intensity is uniform
    over the surveillance region. The forward filter only accepts pure
    Gaussian-mixture birth.
    """

    intensity: GaussianMixture
    uniform_density: float = 0.0

    def __post_init__(self):
        if self.uniform_density < 0.0:
            raise ContractError("uniform birth density must be nonnegative")
        object.__setattr__(self, "uniform_density", float(self.uniform_density))


@dataclass(frozen=True)
class MeasurementModel:
    """Linear-Gaussian detection: z ~ N(H x, R), detected with probability pd."""

    H: np.ndarray
    R: np.ndarray
    pd: float

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape != (H.shape[0], H.shape[0]):
            raise ContractError(f"R shape {R.shape} inconsistent with H {H.shape}")
        if not 0.0 <= self.pd <= 1.0:
            raise ContractError(f"detection probability {self.pd} outside [0, 1]")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "pd", float(self.pd))

    @property
    def dim_z(self) -> int:
        return self.H.shape[0]

    @property
    def dim_x(self) -> int:
        return self.H.shape[1]


def make_position_measurement(dims: int, sigma_r: float, pd: float) -> MeasurementModel:
    """Observe positions of a (pos, vel, ...) interleaved state with iid noise."""
    H = np.kron(np.eye(dims), np.array([[1.0, 0.0]]))
    R = sigma_r**2 * np.eye(dims)
    return MeasurementModel(H, R, pd)


@dataclass(frozen=True)
class ClutterModel:
    """Poisson clutter, uniform over an axis-aligned box in measurement space."""

    rate: float
    region: np.ndarray  # (n_z, 2) rows of [low, high]

    def __post_init__(self):
        region = np.atleast_2d(np.asarray(self.region, dtype=float))
        if region.shape[1] != 2 or np.any(region[:, 1] <= region[:, 0]):
            raise ContractError("clutter region must have positive volume per axis")
        if self.rate < 0.0:
            raise ContractError("clutter rate must be nonnegative")
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "region", region)

    @property
    def volume(self) -> float:
        return float(np.prod(self.region[:, 1] - self.region[:, 0]))

    @property
    def log_density(self) -> float:
        """log of the clutter intensity value rate / volume; -inf for rate 0."""
        if self.rate == 0.0:
            return -math.inf
        return math.log(self.rate) - math.log(self.volume)

    def sample(self, rng: np.random.Generator) -> list[np.ndarray]:
        count = int(rng.poisson(self.rate))
        lo, hi = self.region[:, 0], self.region[:, 1]
        return [lo + rng.random(self.region.shape[0]) * (hi - lo) for _ in range(count)]
