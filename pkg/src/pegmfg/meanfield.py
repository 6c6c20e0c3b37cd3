"""Mean-field trajectory and shock-stream containers.

Storage contract: state series (mispricing ``m``, backlogs ``backlog``,
volatility ``sigma``) carry T+1 entries; flow series (``sec_flow``,
``prim_flow``) carry T entries, one per decision step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MeanFieldPath", "ShockStream"]


def _ro(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=float).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class MeanFieldPath:
    """Aggregate market state over one simulated episode.

    m:         (T+1,) mispricing in dollars
    backlog:   (T+1, C) outstanding primary-channel submissions
    sec_flow:  (T, S) aggregate secondary flow per venue
    prim_flow: (T, C) aggregate primary flow per channel
    sigma:     (T+1,) shock volatility
    """

    m: np.ndarray
    backlog: np.ndarray
    sec_flow: np.ndarray
    prim_flow: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        for name in ("m", "backlog", "sec_flow", "prim_flow", "sigma"):
            object.__setattr__(self, name, _ro(getattr(self, name)))
        T = self.m.shape[0] - 1
        if self.sigma.shape != (T + 1,) or self.backlog.shape[0] != T + 1:
            raise ValueError("state series must have T+1 entries")
        if self.sec_flow.shape[0] != T or self.prim_flow.shape[0] != T:
            raise ValueError("flow series must have T entries")
        if np.any(self.sigma < 0.0):
            raise ValueError("volatility must be nonnegative")

    @property
    def horizon(self) -> int:
        return self.m.shape[0] - 1

    def all_finite(self) -> bool:
        return all(
            bool(np.all(np.isfinite(a)))
            for a in (self.m, self.backlog, self.sec_flow, self.prim_flow, self.sigma)
        )

    def price_distance(self, other: "MeanFieldPath") -> float:
        """Sup-norm distance between the two mispricing paths."""
        return float(np.max(np.abs(self.m - other.m)))

    def blend(self, update: "MeanFieldPath", weight: float) -> "MeanFieldPath":
        """Damped update (1-weight)*self + weight*update, componentwise."""
        w = float(weight)
        return MeanFieldPath(
            m=(1 - w) * self.m + w * update.m,
            backlog=(1 - w) * self.backlog + w * update.backlog,
            sec_flow=(1 - w) * self.sec_flow + w * update.sec_flow,
            prim_flow=(1 - w) * self.prim_flow + w * update.prim_flow,
            sigma=(1 - w) * self.sigma + w * update.sigma,
        )

    @staticmethod
    def zeros(horizon: int, n_venues: int, n_channels: int,
              m0: float = 0.0, sigma0: float = 0.0) -> "MeanFieldPath":
        """Flat path: constant mispricing, no flows, constant volatility."""
        T = horizon
        return MeanFieldPath(
            m=np.full(T + 1, m0),
            backlog=np.zeros((T + 1, n_channels)),
            sec_flow=np.zeros((T, n_venues)),
            prim_flow=np.zeros((T, n_channels)),
            sigma=np.full(T + 1, sigma0),
        )


@dataclass(frozen=True)
class ShockStream:
    """Standard-normal draws feeding the GARCH shock ``eps_t = sigma_t * Z_t``.

    Regenerating from the same seed reproduces the draws bit-exactly.
    """

    seed: int
    draws: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "draws", _ro(self.draws))

    @staticmethod
    def from_seed(seed: int, horizon: int) -> "ShockStream":
        gen = np.random.Generator(np.random.PCG64(seed))
        return ShockStream(seed=seed, draws=gen.standard_normal(horizon))

    @staticmethod
    def zeros(horizon: int, seed: int = 0) -> "ShockStream":
        return ShockStream(seed=seed, draws=np.zeros(horizon))

    @staticmethod
    def for_mode(mode: str, seed: int, horizon: int) -> "ShockStream":
        if mode == "zero-noise":
            return ShockStream.zeros(horizon, seed)
        if mode == "seeded-noise":
            return ShockStream.from_seed(seed, horizon)
        raise ValueError(f"unknown shock mode: {mode!r}")
