"""Refinement-free improvement of satisfaction intervals by clustering
successor states.

The containment lower bound grows with the size of the target, so merging a
state's successors into one box target can force probability mass into the
merged region that the per-cell bounds could not pin down. Each pass visits
states in descending lower-bound order, recomputes the one-step extreme
expectations against the cluster, and keeps a new value only when it is
strictly better. The IMC itself is never rewritten; the cluster is transient
per source state.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .dynamics import ADDITIVE, MULTIPLICATIVE, DynamicsModel, posterior_f
from .errors import InvalidModelError, SoundnessError
from .geometry import Box, Interval, StatePartition
from .imc import (
    Imc,
    PosteriorTable,
    _bounds_to_target,
    _posterior_hull,
)
from .noise import NoiseCell, NoiseModel
from .verify import (
    ReachAvoidSpec,
    VerificationResult,
    _greedy_expectation,
    classify_arrays,
)

_VOL_TOL = 1e-9


@dataclass(frozen=True)
class ClusterProposal:
    """A set of successor cells of one source state whose union is a box."""

    source: int
    members: tuple[int, ...]
    box: Box


def _grid_block_box(partition: StatePartition, ranges: Sequence[range]) -> Box:
    return Box(
        tuple(
            Interval(
                partition.edges[d][ranges[d].start],
                partition.edges[d][ranges[d].stop],
            )
            for d in range(len(ranges))
        )
    )


def _largest_block(
    partition: StatePartition, eligible: set[int]
) -> Optional[tuple[tuple[int, ...], Box]]:
    """Largest axis-aligned block of eligible grid cells, by cell count.

    Brute force over index ranges restricted to the bounding box of the
    eligible set; ties break toward the lexicographically smallest range so
    the result is deterministic.
    """
    if not partition.is_grid() or len(eligible) < 2:
        return None
    multis = [partition.multi_index(i) for i in sorted(eligible)]
    dim = partition.domain.dim
    lo = [min(m[d] for m in multis) for d in range(dim)]
    hi = [max(m[d] for m in multis) for d in range(dim)]
    member_set = set(multis)

    best: Optional[tuple[int, tuple[range, ...]]] = None
    span_choices = []
    for d in range(dim):
        spans = [
            range(a, b + 1)
            for a in range(lo[d], hi[d] + 1)
            for b in range(a, hi[d] + 1)
        ]
        span_choices.append(spans)
    for combo in product(*span_choices):
        count = 1
        for r in combo:
            count *= len(r)
        if count < 2:
            continue
        if best is not None and count < best[0]:
            continue
        if all(idx in member_set for idx in product(*combo)):
            if best is None or count > best[0]:
                best = (count, tuple(combo))
    if best is None:
        return None
    ranges = best[1]
    members = tuple(
        sorted(partition.flat_index(m) for m in product(*ranges))
    )
    return members, _grid_block_box(partition, ranges)


def select_cluster(
    source: int, imc: Imc, hull: Box
) -> Optional[ClusterProposal]:
    """Choose successor cells of ``source`` to merge, given the posterior hull.

    If the hull sits inside the domain and is tiled exactly by successor
    cells, those cells form the cluster. Otherwise the largest axis-aligned
    block of successor cells inside the hull is used. Fewer than two usable
    cells yield no proposal.
    """
    partition = imc.partition
    successors = [
        tb.dst
        for tb in imc.rows[source]
        if tb.dst != imc.unsafe_index and tb.upper > 0.0
    ]
    if len(successors) < 2:
        return None
    inside = [s for s in successors if hull.contains(partition.cells[s])]
    if len(inside) >= 2 and partition.domain.contains(hull):
        tiled_volume = sum(partition.cells[s].volume for s in inside)
        if abs(tiled_volume - hull.volume) <= _VOL_TOL * max(1.0, hull.volume):
            return ClusterProposal(source, tuple(sorted(inside)), hull)
    block = _largest_block(partition, set(inside))
    if block is None:
        return None
    members, box = block
    return ClusterProposal(source, members, box)


def cluster_improve(
    imc: Imc,
    model: DynamicsModel,
    noise: NoiseModel,
    result: VerificationResult,
    spec: ReachAvoidSpec,
    *,
    posterior_table: Optional[PosteriorTable] = None,
    noise_cells: Optional[Sequence[NoiseCell]] = None,
) -> VerificationResult:
    """One improvement pass over all states, in descending lower-bound order.

    For each state with a usable cluster, the one-step extreme expectations
    are recomputed with the cluster replacing its members: the cluster's
    value is the weakest member value (min of lower bounds, max of upper
    bounds) and its transition interval comes from the same bound machinery
    as the rest of the abstraction. A new value is kept only when strictly
    better, so no state ever gets worse. Later states in the pass see
    earlier improvements. Repeat passes until nothing changes to cascade.
    """
    partition = imc.partition
    p_lo = result.p_lower.copy()
    p_hi = result.p_upper.copy()

    pinned = np.zeros(imc.n_states, dtype=bool)
    for i, labs in enumerate(imc.labels):
        if spec.goal_label in labs or labs & spec.avoid_labels:
            pinned[i] = True
    pinned[imc.unsafe_index] = True

    order = sorted(range(partition.n_cells), key=lambda i: (-p_lo[i], i))
    for q_idx in order:
        if pinned[q_idx]:
            continue
        q = partition.cells[q_idx]
        if model.structure in (ADDITIVE, MULTIPLICATIVE):
            postf = (
                posterior_table.postf(q_idx)
                if posterior_table is not None
                else posterior_f(model, q)
            )
        else:
            postf = None
        hull = _posterior_hull(q, model, noise, postf)
        proposal = select_cluster(q_idx, imc, hull)
        if proposal is None:
            continue
        cl_low, cl_up = _bounds_to_target(
            q, proposal.box, model, noise, postf=postf, noise_cells=noise_cells
        )
        member_set = set(proposal.members)
        members = list(proposal.members)
        cluster_key = members[0]
        base = [tb for tb in imc.rows[q_idx] if tb.dst not in member_set]

        entries_lo = [(float(p_lo[tb.dst]), tb.lower, tb.upper, tb.dst) for tb in base]
        entries_lo.append((float(p_lo[members].min()), cl_low, cl_up, cluster_key))
        entries_hi = [(float(p_hi[tb.dst]), tb.lower, tb.upper, tb.dst) for tb in base]
        entries_hi.append((float(p_hi[members].max()), cl_low, cl_up, cluster_key))
        try:
            new_lo = _greedy_expectation(entries_lo, "min")
            new_hi = _greedy_expectation(entries_hi, "max")
        except InvalidModelError as exc:
            # the clustered row must stay feasible; anything else is a bug
            raise SoundnessError(
                f"clustered row for state {q_idx} became infeasible"
            ) from exc
        if new_lo > p_lo[q_idx]:
            p_lo[q_idx] = min(new_lo, p_hi[q_idx])
        if new_hi < p_hi[q_idx]:
            p_hi[q_idx] = max(new_hi, p_lo[q_idx])

    return VerificationResult(
        p_lower=p_lo,
        p_upper=p_hi,
        classification=classify_arrays(p_lo, p_hi, spec.threshold),
        iterations=result.iterations,
        converged=result.converged,
    )
