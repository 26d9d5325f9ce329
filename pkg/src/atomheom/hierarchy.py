"""Multi-index bookkeeping for the auxiliary density operators.

A hierarchy member is labelled by non-negative counts n_k^alpha, one per
decomposition channel (alpha in {x, y, z}, k in 0..K_alpha). The default
truncation keeps every index whose tier (sum of all counts) does not
exceed a global depth D, giving C(M + D, D) members with
M = sum_alpha (K_alpha + 1); a per-bath cap mode is available for
convergence comparisons. Orderings are deterministic (tier, then
lexicographic counts) so parallel traversals and file output are
reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import comb

import numpy as np
from numpy.typing import NDArray

from .basis import AXES
from .errors import CapacityError

DEFAULT_INDEX_BUDGET = 2_000_000


@dataclass(frozen=True)
class ADOIndex:
    """Counts n_k^alpha for one hierarchy member, flattened channel-major."""

    counts: tuple[int, ...]

    @property
    def tier(self) -> int:
        return sum(self.counts)

    def is_zero(self) -> bool:
        return self.tier == 0


@dataclass(frozen=True)
class HierarchyIndexSpace:
    """All retained multi-indices plus precomputed neighbor lookups.

    channels lists (axis, k) pairs in the flattened count order.
    neighbor_table[i, c, 0] is the position of index i with count c lowered
    by one (-1 when absent) and neighbor_table[i, c, 1] the raised position.
    """

    depth: int
    per_axis_K: dict[str, int]
    truncation: str
    index_list: tuple[ADOIndex, ...]
    channels: tuple[tuple[str, int], ...]
    neighbor_table: NDArray[np.int64] = field(repr=False)
    counts_array: NDArray[np.int64] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.index_list)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def position(self, index: ADOIndex) -> int:
        return self._positions[index.counts]

    def terminator_mask(self) -> NDArray[np.bool_]:
        """True for members with at least one absent raised neighbor."""
        return (self.neighbor_table[:, :, 1] < 0).any(axis=1)

    def __post_init__(self):
        object.__setattr__(
            self, "_positions", {ix.counts: i for i, ix in enumerate(self.index_list)}
        )


def _tuples_with_budget(slots: int, budget: int):
    """All non-negative integer tuples of given length summing to <= budget."""
    if slots == 0:
        yield ()
        return
    for v in range(budget + 1):
        for rest in _tuples_with_budget(slots - 1, budget - v):
            yield (v,) + rest


def enumerate_indices(
    per_axis_K: dict[str, int],
    depth: int,
    truncation: str = "global",
    index_budget: int = DEFAULT_INDEX_BUDGET,
) -> HierarchyIndexSpace:
    """Build the retained index set and its neighbor table.

    truncation 'global' keeps tier <= depth over all channels; 'per_bath'
    applies the cap to each axis separately. Raises CapacityError when the
    member count would exceed index_budget.
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if truncation not in ("global", "per_bath"):
        raise ValueError(f"truncation must be 'global' or 'per_bath', got {truncation!r}")
    for axis in AXES:
        if per_axis_K.get(axis, -1) < 0:
            raise ValueError(f"per_axis_K must give K >= 0 for axis {axis}")

    channels = tuple((axis, k) for axis in AXES for k in range(per_axis_K[axis] + 1))
    n_channels = len(channels)

    if truncation == "global":
        count_estimate = comb(n_channels + depth, depth)
    else:
        count_estimate = 1
        for axis in AXES:
            count_estimate *= comb(per_axis_K[axis] + 1 + depth, depth)
    if count_estimate > index_budget:
        raise CapacityError(
            f"hierarchy would hold {count_estimate} members, over the budget "
            f"of {index_budget}",
            count=count_estimate,
        )

    if truncation == "global":
        members = list(_tuples_with_budget(n_channels, depth))
    else:
        per_axis = [
            list(_tuples_with_budget(per_axis_K[axis] + 1, depth)) for axis in AXES
        ]
        members = [sum(combo, ()) for combo in product(*per_axis)]
    members.sort(key=lambda c: (sum(c), c))
    index_list = tuple(ADOIndex(counts=c) for c in members)
    positions = {c: i for i, c in enumerate(members)}

    counts_array = np.array(members, dtype=np.int64).reshape(len(members), n_channels)
    table = np.full((len(members), n_channels, 2), -1, dtype=np.int64)
    for i, counts in enumerate(members):
        for c in range(n_channels):
            if counts[c] > 0:
                lowered = counts[:c] + (counts[c] - 1,) + counts[c + 1 :]
                table[i, c, 0] = positions[lowered]
            raised = counts[:c] + (counts[c] + 1,) + counts[c + 1 :]
            pos = positions.get(raised)
            if pos is not None:
                table[i, c, 1] = pos
    table.setflags(write=False)
    counts_array.setflags(write=False)

    return HierarchyIndexSpace(
        depth=depth,
        per_axis_K=dict(per_axis_K),
        truncation=truncation,
        index_list=index_list,
        channels=channels,
        neighbor_table=table,
        counts_array=counts_array,
    )


def neighbor(space: HierarchyIndexSpace, index: ADOIndex, axis: str, k: int,
             direction: int) -> int | None:
    """Position of index with n_k^axis changed by direction, None if absent."""
    if direction not in (-1, 1):
        raise ValueError(f"direction must be -1 or +1, got {direction}")
    c = space.channels.index((axis, k))
    pos = space.neighbor_table[space.position(index), c, 0 if direction < 0 else 1]
    return None if pos < 0 else int(pos)


def damping_rate(index: ADOIndex, nu_by_channel) -> float:
    """sum_{alpha,k} n_k^alpha nu_k^alpha for one member."""
    return float(np.dot(np.asarray(index.counts, dtype=float), np.asarray(nu_by_channel)))
