"""Simulated soft-isolated virtual RAN.

The radio model is deliberately small: every virtual resource block carries a
fixed per-block rate, each slice's application offers frames at a fixed rate
and size, and demand is the block count needed to carry that offered load
(optionally jittered by a burstiness factor). In soft isolation the idle-pool
sharing of `vsharing` tops up overflowed slices; in hard isolation a slice
can never use more than its own svRBs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .core import Action, PerfVector, SliceSpec
from .errors import CapacityExceededError, ScenarioError
from .vsharing import SliceDemand, share_pool

# Demand is a whole-block ceiling; the epsilon keeps exact ratios assembled
# from binary floats (e.g. 30*0.7/2.1) from rounding up a phantom block.
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class TrafficProfile:
    """Offered load of one slice's application."""

    frame_rate: float  # frames per second offered by the app
    frame_size: float  # Mb per frame
    burstiness: float = 0.0  # >= 0, scale of multiplicative demand jitter

    def __post_init__(self) -> None:
        if self.frame_rate <= 0.0 or self.frame_size <= 0.0:
            raise ValueError(
                f"frame_rate and frame_size must be > 0, got ({self.frame_rate}, {self.frame_size})"
            )
        if self.burstiness < 0.0:
            raise ValueError(f"burstiness must be >= 0, got {self.burstiness}")


@dataclass(frozen=True)
class EnvConfig:
    """Physical parameters of the simulated RAN."""

    capacity_h: int  # total vRBs the infrastructure owns
    per_vrb_rate: float = 2.1  # Mbps carried by one vRB
    noise_std: float = 0.03  # std of multiplicative throughput noise
    isolation_mode: str = "soft"  # "soft" or "hard"

    def __post_init__(self) -> None:
        if self.capacity_h <= 0:
            raise ValueError(f"capacity_h must be > 0, got {self.capacity_h}")
        if self.per_vrb_rate <= 0.0:
            raise ValueError(f"per_vrb_rate must be > 0, got {self.per_vrb_rate}")
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.isolation_mode not in ("soft", "hard"):
            raise ValueError(f"isolation_mode must be 'soft' or 'hard', got {self.isolation_mode!r}")


@dataclass(frozen=True)
class DynamicsEvent:
    """A scripted change to the slice population or an SLA at a given slot."""

    slot: int
    kind: str  # "slice_join" | "slice_leave" | "sla_change"
    slice_id: str
    q_throughput: float | None = None
    q_fps: float | None = None

    def __post_init__(self) -> None:
        if self.slot < 0:
            raise ValueError(f"event slot must be >= 0, got {self.slot}")
        if self.kind not in ("slice_join", "slice_leave", "sla_change"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "sla_change" and (self.q_throughput is None or self.q_fps is None):
            raise ValueError("sla_change events need q_throughput and q_fps")


def demand_vrbs(profile: TrafficProfile, config: EnvConfig, rng: np.random.Generator) -> int:
    """Blocks needed to carry the offered load, jittered when bursty.

    With burstiness 0 no random draw is consumed, so the result is a pure
    function of the profile and config.
    """
    base = profile.frame_rate * profile.frame_size / config.per_vrb_rate
    if profile.burstiness > 0.0:
        base *= max(0.0, 1.0 + profile.burstiness * rng.standard_normal())
    return max(0, int(math.ceil(base - _CEIL_EPS)))


def step(
    actions: Mapping[str, Action],
    specs: Sequence[SliceSpec],
    config: EnvConfig,
    rng: np.random.Generator,
) -> dict[str, PerfVector]:
    """Apply a joint action for one slot and report delivered performance.

    Order of operations: draw each active slice's demand, resolve final vRBs
    (sharing in soft mode, min(demand, svrb) in hard mode), then convert
    blocks to throughput with multiplicative noise. FPS is the offered frame
    rate capped by what the delivered throughput can carry.
    """
    active = [s for s in specs if s.active]
    if set(actions) != {s.slice_id for s in active}:
        raise ScenarioError(
            f"actions keyed {sorted(actions)} do not match active slices "
            f"{sorted(s.slice_id for s in active)}"
        )
    total_svrb = sum(a.svrb for a in actions.values())
    if total_svrb > config.capacity_h:
        raise CapacityExceededError(
            f"joint action orchestrates {total_svrb} svRBs over capacity {config.capacity_h}"
        )

    demands: dict[str, int] = {}
    for s in active:
        if s.app_profile is None:
            raise ScenarioError(f"slice {s.slice_id} has no traffic profile")
        demands[s.slice_id] = demand_vrbs(s.app_profile, config, rng)

    if config.isolation_mode == "soft":
        inputs = [
            SliceDemand(s.slice_id, actions[s.slice_id].svrb, actions[s.slice_id].sw, demands[s.slice_id])
            for s in active
        ]
        final = {a.slice_id: a.final_vrb for a in share_pool(inputs, config.capacity_h)}
    else:
        final = {s.slice_id: min(demands[s.slice_id], actions[s.slice_id].svrb) for s in active}

    perfs: dict[str, PerfVector] = {}
    for s in active:
        throughput = final[s.slice_id] * config.per_vrb_rate
        if config.noise_std > 0.0:
            throughput *= 1.0 + config.noise_std * rng.standard_normal()
        throughput = max(0.0, throughput)
        fps = min(s.app_profile.frame_rate, throughput / s.app_profile.frame_size)
        perfs[s.slice_id] = PerfVector(throughput, fps)
    return perfs


def apply_events(
    slot: int, events: Sequence[DynamicsEvent], specs: Sequence[SliceSpec]
) -> list[SliceSpec]:
    """Apply the events scheduled for `slot` and return the updated specs."""
    updated = list(specs)
    known = {s.slice_id: i for i, s in enumerate(updated)}
    for ev in events:
        if ev.slot != slot:
            continue
        if ev.slice_id not in known:
            raise ScenarioError(f"event at slot {slot} names unknown slice {ev.slice_id!r}")
        i = known[ev.slice_id]
        if ev.kind == "slice_join":
            updated[i] = replace(updated[i], active=True)
        elif ev.kind == "slice_leave":
            updated[i] = replace(updated[i], active=False)
        else:
            updated[i] = replace(updated[i], q_throughput=ev.q_throughput, q_fps=ev.q_fps)
    return updated


class RanEnvironment:
    """Stateful wrapper owning the traffic/noise RNG substream."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng

    def step(self, actions: Mapping[str, Action], specs: Sequence[SliceSpec]) -> dict[str, PerfVector]:
        return step(actions, specs, self.config, self.rng)
