"""Soft-isolated sharing of idle virtual resource blocks.

Each slice owns its orchestrated svRBs outright. Capacity nobody is using
(unorchestrated blocks plus the spare blocks of slices whose demand fits
inside their own svRBs) forms a pool, and the pool is granted to the
overflowed slices proportionally to their sharing weights. Sharing never
takes a block away from a slice that wants it: non-overflowed slices keep
exactly their demand, and every grant is floored to whole blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import CapacityExceededError

# Grants are grounded to whole blocks with a tiny epsilon so that exact
# fractions assembled from binary floats (e.g. 6*0.3/0.6) do not lose a block.
GROUND_EPS = 1e-9


def ground(value: float) -> int:
    """Float-safe floor: whole-block grant for a fractional entitlement."""
    return int(math.floor(value + GROUND_EPS))


@dataclass(frozen=True)
class SliceDemand:
    """One slice's sharing inputs for a single slot."""

    slice_id: str
    orchestrated_svrb: int
    sw: float
    demanded_vrb: int

    def __post_init__(self) -> None:
        if self.orchestrated_svrb < 0:
            raise ValueError(f"orchestrated_svrb must be >= 0, got {self.orchestrated_svrb}")
        if not 0.0 <= self.sw <= 1.0:
            raise ValueError(f"sw must lie in [0, 1], got {self.sw}")
        if self.demanded_vrb < 0:
            raise ValueError(f"demanded_vrb must be >= 0, got {self.demanded_vrb}")


@dataclass(frozen=True)
class VrbAllocation:
    """Final vRBs delivered to one slice after sharing."""

    slice_id: str
    final_vrb: int
    from_pool: int


def is_overflowed(demand: SliceDemand) -> bool:
    """A slice overflows when its demand strictly exceeds its own svRBs."""
    return demand.demanded_vrb > demand.orchestrated_svrb


def build_pool(demands: Sequence[SliceDemand], capacity: int) -> int:
    """Blocks available for sharing this slot.

    Pool = unorchestrated capacity + spare blocks of non-overflowed slices.
    Overflowed slices contribute nothing: they are consuming all they own.
    """
    total_svrb = sum(d.orchestrated_svrb for d in demands)
    if total_svrb > capacity:
        raise CapacityExceededError(
            f"orchestrated svRBs ({total_svrb}) exceed capacity ({capacity})"
        )
    spare = sum(
        max(d.orchestrated_svrb - d.demanded_vrb, 0) for d in demands if not is_overflowed(d)
    )
    return (capacity - total_svrb) + spare


def share_pool(demands: Sequence[SliceDemand], capacity: int) -> list[VrbAllocation]:
    """Grant the idle pool to overflowed slices by sharing weight.

    Non-overflowed slices end up with exactly their demand. Overflowed
    slices receive floor(pool * sw_i / sum-of-overflowed-sw) extra blocks on
    top of their own svRBs; grants are not capped by residual demand, so a
    lone bulk transfer can absorb the whole pool. Flooring remainders stay
    unallocated. If every overflowed slice has zero weight nothing is
    distributed.
    """
    pool = build_pool(demands, capacity)
    overflowed_sw = sum(d.sw for d in demands if is_overflowed(d))

    allocations: list[VrbAllocation] = []
    for d in demands:
        if not is_overflowed(d):
            allocations.append(VrbAllocation(d.slice_id, d.demanded_vrb, 0))
        elif overflowed_sw <= 0.0 or d.sw <= 0.0:
            allocations.append(VrbAllocation(d.slice_id, d.orchestrated_svrb, 0))
        else:
            grant = ground(pool * d.sw / overflowed_sw)
            allocations.append(VrbAllocation(d.slice_id, d.orchestrated_svrb + grant, grant))

    delivered = sum(a.final_vrb for a in allocations)
    if delivered > capacity:  # structural invariant; documents the conservation argument
        raise CapacityExceededError(
            f"internal: sharing delivered {delivered} vRBs over capacity {capacity}"
        )
    return allocations
