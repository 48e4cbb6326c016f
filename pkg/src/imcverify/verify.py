"""Robust interval value iteration for reach-avoid specifications.

Satisfaction bounds follow the standard interval dynamic program: the lower
bound iterates the minimizing adversary and the upper bound the maximizing
one, both starting from the goal indicator. Goal states stay pinned at 1 and
avoid states (obstacles and the unsafe state) at 0, which collapses the
reach-avoid product onto the labels.

The extreme one-step expectation over all adversaries is attained by the
ordering construction: sort successors by value, give every successor its
lower bound, then saturate the remaining mass in sorted order up to each
upper bound. The feasible set is a transportation polytope and this greedy
walk reaches its extreme points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidModelError, SpecificationError
from .imc import Imc, TransitionBound, UNSAFE_LABEL

_FEAS_TOL = 1e-9

SATISFIES = "satisfies"
VIOLATES = "violates"
UNDETERMINED = "undetermined"

DEFAULT_THRESHOLD = 0.9
DEFAULT_CONVERGENCE_TOL = 1e-6
DEFAULT_MAX_ITERATIONS = 10**5


@dataclass(frozen=True)
class ReachAvoidSpec:
    """Reach a goal-labeled region while never entering avoid-labeled ones.

    ``horizon`` is a step count, or None for the unbounded horizon.
    """

    goal_label: str = "goal"
    avoid_labels: frozenset[str] = frozenset({"obstacle", UNSAFE_LABEL})
    horizon: Optional[int] = None
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError(f"finite horizon must be >= 0, got {self.horizon}")
        object.__setattr__(self, "avoid_labels", frozenset(self.avoid_labels))


@dataclass(frozen=True)
class VerificationResult:
    """Per-state satisfaction interval [p_lower, p_upper] and classification."""

    p_lower: np.ndarray
    p_upper: np.ndarray
    classification: tuple[str, ...]
    iterations: int
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "p_lower", np.asarray(self.p_lower, dtype=float))
        object.__setattr__(self, "p_upper", np.asarray(self.p_upper, dtype=float))


def _greedy_expectation(
    entries: Sequence[tuple[float, float, float, int]], mode: str
) -> float:
    """Extreme expectation over adversaries for one row.

    ``entries`` are (value, lower, upper, tie_index). Ties in value break by
    ascending tie_index; the expectation itself is tie-invariant.
    """
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    total_lower = sum(e[1] for e in entries)
    total_upper = sum(e[2] for e in entries)
    if total_lower > 1.0 + _FEAS_TOL or total_upper < 1.0 - _FEAS_TOL:
        raise InvalidModelError(
            f"infeasible row: sum(lower)={total_lower}, sum(upper)={total_upper}"
        )
    if mode == "min":
        order = sorted(entries, key=lambda e: (e[0], e[3]))
    else:
        order = sorted(entries, key=lambda e: (-e[0], e[3]))
    remaining = 1.0 - total_lower
    expectation = 0.0
    for value, lower, upper, _ in order:
        gamma = lower
        if remaining > 0.0:
            add = min(remaining, upper - lower)
            gamma += add
            remaining -= add
        expectation += gamma * value
    return expectation


def adversary_extreme_expectation(
    values: np.ndarray, row: Sequence[TransitionBound], mode: str
) -> float:
    """Extreme of sum_q' gamma(q,q') * values(q') over all valid adversaries."""
    values = np.asarray(values, dtype=float)
    entries = [(float(values[tb.dst]), tb.lower, tb.upper, tb.dst) for tb in row]
    return _greedy_expectation(entries, mode)


def _goal_avoid_sets(imc: Imc, spec: ReachAvoidSpec) -> tuple[np.ndarray, np.ndarray]:
    n = imc.n_states
    goal = np.zeros(n, dtype=bool)
    avoid = np.zeros(n, dtype=bool)
    for i, labs in enumerate(imc.labels):
        if spec.goal_label in labs:
            goal[i] = True
        if labs & spec.avoid_labels:
            avoid[i] = True
    overlap = goal & avoid
    if overlap.any():
        raise SpecificationError(
            f"goal and avoid label sets overlap on states "
            f"{np.flatnonzero(overlap).tolist()}"
        )
    return goal, avoid


def robust_value_iteration(
    imc: Imc,
    spec: ReachAvoidSpec,
    *,
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> VerificationResult:
    """Compute [p_lower, p_upper] per state for the reach-avoid property.

    A finite horizon runs exactly that many iterations. The unbounded
    horizon iterates until the largest per-state change in either bound is
    below ``convergence_tol`` or the iteration cap is hit; the result
    reports which happened.
    """
    goal, avoid = _goal_avoid_sets(imc, spec)
    n = imc.n_states
    free = np.flatnonzero(~goal & ~avoid)

    v_lo = goal.astype(float)
    v_hi = goal.astype(float)
    iterations = 0
    converged = spec.horizon is not None or len(free) == 0

    if spec.horizon is not None:
        sweeps = spec.horizon
    else:
        sweeps = max_iterations
    for _ in range(sweeps):
        new_lo = v_lo.copy()
        new_hi = v_hi.copy()
        for i in free:
            new_lo[i] = _greedy_expectation(
                [(v_lo[tb.dst], tb.lower, tb.upper, tb.dst) for tb in imc.rows[i]],
                "min",
            )
            new_hi[i] = _greedy_expectation(
                [(v_hi[tb.dst], tb.lower, tb.upper, tb.dst) for tb in imc.rows[i]],
                "max",
            )
        delta = max(
            float(np.max(np.abs(new_lo - v_lo))),
            float(np.max(np.abs(new_hi - v_hi))),
        )
        v_lo, v_hi = new_lo, new_hi
        iterations += 1
        if spec.horizon is None and delta < convergence_tol:
            converged = True
            break

    v_lo = np.minimum(v_lo, v_hi)
    classification = classify_arrays(v_lo, v_hi, spec.threshold)
    return VerificationResult(
        p_lower=v_lo,
        p_upper=v_hi,
        classification=classification,
        iterations=iterations,
        converged=converged,
    )


def classify_arrays(
    p_lower: np.ndarray, p_upper: np.ndarray, threshold: float
) -> tuple[str, ...]:
    out = []
    for lo, hi in zip(p_lower, p_upper):
        if lo >= threshold:
            out.append(SATISFIES)
        elif hi < threshold:
            out.append(VIOLATES)
        else:
            out.append(UNDETERMINED)
    return tuple(out)


def classify(result: VerificationResult, threshold: float) -> tuple[str, ...]:
    """Three-way classification of each state against a threshold."""
    return classify_arrays(result.p_lower, result.p_upper, threshold)


# --- result export --------------------------------------------------------------


def write_results(result: VerificationResult, imc: Imc, path) -> None:
    """One row per state: index, box bounds, p_lower, p_upper, class.

    The unsafe state has no box; its bound fields stay empty.
    """
    dim = imc.partition.domain.dim
    header = ",".join(
        ["state"]
        + [f"lo{d + 1},hi{d + 1}" for d in range(dim)]
        + ["p_lower", "p_upper", "class"]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(imc.n_states):
            if i < imc.partition.n_cells:
                cell = imc.partition.cells[i]
                bounds = ",".join(
                    f"{cell.component(d).lo!r},{cell.component(d).hi!r}"
                    for d in range(dim)
                )
            else:
                bounds = ",".join([""] * (2 * dim))
            fh.write(
                f"{i},{bounds},{float(result.p_lower[i])!r},"
                f"{float(result.p_upper[i])!r},{result.classification[i]}\n"
            )


def read_results(path, imc: Imc) -> VerificationResult:
    """Reload an exported result table; iteration metadata is not persisted."""
    n = imc.n_states
    p_lower = np.zeros(n)
    p_upper = np.zeros(n)
    classification = [UNDETERMINED] * n
    seen = np.zeros(n, dtype=bool)
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            state = int(parts[0])
            p_lower[state] = float(parts[-3])
            p_upper[state] = float(parts[-2])
            classification[state] = parts[-1]
            seen[state] = True
    if not seen.all():
        missing = np.flatnonzero(~seen).tolist()
        raise ValueError(f"result table is missing states {missing}")
    return VerificationResult(
        p_lower=p_lower,
        p_upper=p_upper,
        classification=tuple(classification),
        iterations=0,
        converged=True,
    )
