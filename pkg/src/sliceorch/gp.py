"""Gaussian-process surrogate and priority replay buffer for the slice agents.

Exact GP regression with a Matern kernel over anisotropic (per-dimension)
length scales, zero prior mean over standardized targets. The training window
comes from a small replay buffer whose priorities decay with age, so the
surrogate tracks a drifting environment instead of averaging over history.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .core import PerfVector
from .errors import GpFitError

# Jitter escalation: start tiny, multiply by 10, give up past the max.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class GpInput:
    """Surrogate input for one slice observation.

    peers_sw is the slot's aggregated sharing weight of the other slices:
    exogenous context that shifts how much pool the slice's own sw can win.
    """

    svrb: float
    sw: float
    peers_sw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.svrb, self.sw, self.peers_sw], dtype=float)


@dataclass
class Experience:
    """One observed (input, delivered performance) pair.

    The raw PerfVector is stored rather than a scalar objective so targets can
    be re-priced under whatever SLA thresholds hold at fit time.
    """

    input: GpInput
    observed: PerfVector
    slot: int
    priority: float = 1.0

    def key(self) -> tuple:
        """Identity of the queried input, for duplicate replacement."""
        return (self.input.svrb, self.input.sw, self.input.peers_sw)


class ReplayBuffer:
    """Fixed-capacity buffer with age-decayed priorities.

    Every push decays all retained priorities by `decay` (one aging step per
    arriving experience), inserts the newcomer at maximal priority, and evicts
    the oldest entry once full. Re-observing an input already in the buffer
    replaces the stale entry instead of appending a duplicate: repeats carry
    no new information but would crowd out the diversity the surrogate needs.
    Sampling is proportional to priority, without replacement.
    """

    def __init__(self, capacity: int, decay: float = 0.95, max_priority: float = 1.0):
        if capacity <= 0:
            raise ValueError(f"capacity must be > 0, got {capacity}")
        if not 0.0 < decay <= 1.0:
            raise ValueError(f"decay must lie in (0, 1], got {decay}")
        self.capacity = capacity
        self.decay = decay
        self.max_priority = max_priority
        self._items: deque = deque()

    def __len__(self) -> int:
        return len(self._items)

    @property
    def items(self) -> list:
        """Oldest-first view of the buffer contents."""
        return list(self._items)

    def push(self, item) -> None:
        for old in self._items:
            old.priority *= self.decay
        key = item.key() if hasattr(item, "key") else None
        if key is not None:
            for i, old in enumerate(self._items):
                if hasattr(old, "key") and old.key() == key:
                    del self._items[i]
                    break
        if len(self._items) == self.capacity:
            self._items.popleft()
        item.priority = self.max_priority
        self._items.append(item)

    def sample(self, n: int, rng: np.random.Generator) -> list:
        """Draw min(n, len) distinct items with probability proportional to priority."""
        if n <= 0:
            return []
        if n >= len(self._items):
            return list(self._items)
        priorities = np.array([it.priority for it in self._items], dtype=float)
        weights = priorities / priorities.sum()
        idx = rng.choice(len(self._items), size=n, replace=False, p=weights)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class KernelParams:
    """Matern kernel hyperparameters with one length scale per input dimension."""

    length_scales: tuple[float, ...]
    signal_var: float = 1.0
    nu: float = 2.5

    def __post_init__(self) -> None:
        if any(l <= 0.0 for l in self.length_scales):
            raise ValueError(f"length scales must be > 0, got {self.length_scales}")
        if self.signal_var <= 0.0:
            raise ValueError(f"signal_var must be > 0, got {self.signal_var}")
        if self.nu not in (0.5, 1.5, 2.5):
            raise ValueError(f"nu must be one of 0.5, 1.5, 2.5, got {self.nu}")


def kernel_matrix(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    """Matern cross-covariance between row sets `a` (m,d) and `b` (n,d)."""
    scales = np.asarray(params.length_scales, dtype=float)
    diff = (a[:, None, :] - b[None, :, :]) / scales
    r = np.sqrt(np.maximum(np.einsum("mnd,mnd->mn", diff, diff), 0.0))
    if params.nu == 0.5:
        base = np.exp(-r)
    elif params.nu == 1.5:
        t = math.sqrt(3.0) * r
        base = (1.0 + t) * np.exp(-t)
    else:
        t = math.sqrt(5.0) * r
        base = (1.0 + t + t * t / 3.0) * np.exp(-t)
    return params.signal_var * base


def _chol_with_jitter(gram: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter until it succeeds."""
    try:
        return cholesky(gram, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_START
    eye = np.eye(gram.shape[0])
    while jitter <= _JITTER_MAX:
        try:
            return cholesky(gram + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GpFitError(f"Gram factorization failed with jitter up to {_JITTER_MAX}")


@dataclass
class GpModel:
    """Fitted exact-GP posterior (or the bare prior when x_train is None)."""

    params: KernelParams
    noise_var: float
    x_train: np.ndarray | None = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    chol: np.ndarray | None = None
    alpha: np.ndarray | None = None
    jitter: float = 0.0

    @classmethod
    def prior(cls, params: KernelParams, noise_var: float = 0.0) -> "GpModel":
        return cls(params=params, noise_var=noise_var)

    @property
    def prior_var(self) -> float:
        """Prior predictive variance in raw target units."""
        return self.params.signal_var * self.y_scale * self.y_scale

    def predict(self, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at the query rows."""
        x_query = np.atleast_2d(np.asarray(x_query, dtype=float))
        if self.x_train is None:
            mu = np.zeros(x_query.shape[0])
            sigma = np.full(x_query.shape[0], math.sqrt(self.params.signal_var))
            return mu, sigma
        k_star = kernel_matrix(x_query, self.x_train, self.params)
        mu_std = k_star @ self.alpha
        v = solve_triangular(self.chol, k_star.T, lower=True)
        var_std = self.params.signal_var - np.einsum("nm,nm->m", v, v)
        sigma = self.y_scale * np.sqrt(np.clip(var_std, 0.0, None))
        return self.y_mean + self.y_scale * mu_std, sigma


def _standardize(targets: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(targets.mean())
    scale = float(targets.std())
    if not math.isfinite(scale) or scale < 1e-12:
        scale = 1.0
    return (targets - mean) / scale, mean, scale


def fit(
    inputs: np.ndarray,
    targets: Sequence[float] | np.ndarray,
    params: KernelParams,
    noise_var: float,
) -> GpModel:
    """Fit the exact GP on (inputs, targets) with fixed hyperparameters."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("cannot fit a GP on zero experiences")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
    if x.shape[1] != len(params.length_scales):
        raise ValueError(
            f"inputs have {x.shape[1]} dims but kernel has {len(params.length_scales)} length scales"
        )
    if noise_var < 0.0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")
    y_std, y_mean, y_scale = _standardize(y)
    gram = kernel_matrix(x, x, params) + noise_var * np.eye(x.shape[0])
    chol, jitter = _chol_with_jitter(gram)
    alpha = cho_solve((chol, True), y_std)
    return GpModel(
        params=params,
        noise_var=noise_var,
        x_train=x,
        y_mean=y_mean,
        y_scale=y_scale,
        chol=chol,
        alpha=alpha,
        jitter=jitter,
    )


def log_marginal_likelihood(
    inputs: np.ndarray,
    targets: np.ndarray,
    params: KernelParams,
    noise_var: float,
) -> float:
    """Log marginal likelihood of the standardized targets under the kernel."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y_std, _, _ = _standardize(np.asarray(targets, dtype=float))
    gram = kernel_matrix(x, x, params) + noise_var * np.eye(x.shape[0])
    chol, _ = _chol_with_jitter(gram)
    alpha = cho_solve((chol, True), y_std)
    n = x.shape[0]
    return float(
        -0.5 * y_std @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * math.log(2.0 * math.pi)
    )


def optimize_params(
    inputs: np.ndarray,
    targets: np.ndarray,
    init: KernelParams,
    noise_var: float,
    reference: KernelParams | None = None,
    max_iter: int = 15,
) -> tuple[KernelParams, float]:
    """Refit hyperparameters by maximizing log marginal likelihood.

    Multi-start local search in log space: one start from the current
    hyperparameters, one from the reference (dimension-span) defaults.
    Deterministic given the data.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    d = x.shape[1]
    reference = reference or init

    def pack(p: KernelParams, nv: float) -> np.ndarray:
        return np.log(np.array([*p.length_scales, p.signal_var, max(nv, 1e-8)]))

    def unpack(theta: np.ndarray) -> tuple[KernelParams, float]:
        vals = np.exp(theta)
        return (
            KernelParams(tuple(float(v) for v in vals[:d]), float(vals[d]), init.nu),
            float(vals[d + 1]),
        )

    def negative_lml(theta: np.ndarray) -> float:
        try:
            p, nv = unpack(theta)
            return -log_marginal_likelihood(x, y, p, nv)
        except (GpFitError, FloatingPointError, ValueError):
            return 1e12

    bounds = [(math.log(1e-2), math.log(1e3))] * d + [
        (math.log(1e-4), math.log(1e4)),
        (math.log(1e-8), math.log(1e-1)),
    ]
    starts = [pack(init, noise_var), pack(reference, 1e-4)]
    best_theta, best_val = None, math.inf
    for theta0 in starts:
        res = minimize(
            negative_lml,
            np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds]),
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter},
        )
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    if best_theta is None or not math.isfinite(best_val):
        return init, noise_var
    return unpack(best_theta)


def default_length_scales(spans: Iterable[float]) -> tuple[float, ...]:
    """Half the span of each input dimension, floored away from zero."""
    return tuple(max(span / 2.0, 1e-2) for span in spans)
