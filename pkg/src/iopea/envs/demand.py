"""Demand laws with an atom at zero, shared by the inventory environments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("exponential", "normal", "uniform")


@dataclass(frozen=True)
class DemandModel:
    """``D = 0`` with probability ``gamma``, otherwise a base draw clipped to
    ``[0, upper]``.

    ``exponential`` takes ``loc`` as its mean; ``normal`` takes ``(loc, scale)``
    as mean and variance; ``uniform`` draws on ``[loc, scale]``.
    """

    kind: str = "exponential"
    loc: float = 1.0
    scale: float = 0.0
    gamma: float = 0.3
    upper: float = 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown demand kind {self.kind!r}")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.upper <= 0:
            raise ValueError("demand support must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # fixed draw order keeps streams aligned across policies
        zero = rng.random(n) < self.gamma
        if self.kind == "exponential":
            base = rng.exponential(self.loc, n)
        elif self.kind == "normal":
            base = rng.normal(self.loc, np.sqrt(self.scale), n)
        else:
            base = rng.uniform(self.loc, self.scale, n)
        return np.where(zero, 0.0, np.clip(base, 0.0, self.upper))

    @classmethod
    def from_dict(cls, d: dict) -> "DemandModel":
        kind = d.get("kind", "exponential")
        defaults = {"exponential": (1.0, 0.0), "normal": (1.0, 0.5), "uniform": (0.0, 3.0)}[kind]
        return cls(
            kind=kind,
            loc=float(d.get("loc", defaults[0])),
            scale=float(d.get("scale", defaults[1])),
            gamma=float(d.get("gamma", 0.3)),
            upper=float(d.get("upper", 3.0)),
        )
