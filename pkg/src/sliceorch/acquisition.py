"""Acquisition portfolio and Hedge arbitration for the Bayesian agents.

All acquisitions score candidates for *minimization* of the surrogate
objective; larger scores are more promising. A softmax Hedge bandit picks
which acquisition's nominee is actually played, learning from full-information
rewards (every arm is rewarded each round, played or not).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

DEFAULT_KAPPA = 1.96
PORTFOLIO = ("ei", "pi", "lcb")


def ei(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """Expected improvement below the incumbent best."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    improve = best - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(sigma > 0.0, improve / sigma, 0.0)
    exact = np.maximum(improve, 0.0)  # deterministic candidate: improvement or nothing
    return np.where(sigma > 0.0, improve * norm.cdf(d) + sigma * norm.pdf(d), exact)


def pi(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """Probability of improving on the incumbent best."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(sigma > 0.0, (best - mu) / sigma, 0.0)
    return np.where(sigma > 0.0, norm.cdf(d), (mu < best).astype(float))


def lcb(mu: np.ndarray, sigma: np.ndarray, kappa: float = DEFAULT_KAPPA) -> np.ndarray:
    """Lower confidence bound; smaller is more promising."""
    return np.asarray(mu, dtype=float) - kappa * np.asarray(sigma, dtype=float)


def portfolio_nominate(
    mu: np.ndarray, sigma: np.ndarray, best: float, kappa: float = DEFAULT_KAPPA
) -> np.ndarray:
    """Each acquisition's favorite candidate index, in PORTFOLIO order.

    Ties resolve to the first (lowest-index) candidate, so callers get
    lexicographic tie-breaking for free by ordering their grids.
    """
    scores = np.stack([ei(mu, sigma, best), pi(mu, sigma, best), -lcb(mu, sigma, kappa)])
    return scores.argmax(axis=1)


@dataclass
class HedgeState:
    """Cumulative gains and softmax temperature of the acquisition bandit."""

    gains: np.ndarray = field(default_factory=lambda: np.zeros(len(PORTFOLIO)))
    eta: float = 1.0

    def __post_init__(self) -> None:
        self.gains = np.asarray(self.gains, dtype=float)
        if self.eta <= 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")


def hedge_probabilities(state: HedgeState) -> np.ndarray:
    """Softmax of eta-scaled gains, max-shifted so large gains cannot overflow."""
    scaled = state.eta * state.gains
    scaled = scaled - scaled.max()
    expd = np.exp(scaled)
    return expd / expd.sum()


def hedge_select(state: HedgeState, rng: np.random.Generator) -> int:
    """Draw an arm index from the softmax distribution."""
    return int(rng.choice(len(state.gains), p=hedge_probabilities(state)))


def hedge_update(state: HedgeState, rewards: np.ndarray) -> None:
    """Full-information update: every arm's gain absorbs its reward."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != state.gains.shape:
        raise ValueError(f"expected {state.gains.shape[0]} rewards, got {rewards.shape}")
    state.gains = state.gains + rewards
