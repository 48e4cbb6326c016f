"""Monte Carlo validation: sample trajectories of the continuous system and
check empirical satisfaction against the verified intervals.

Sampling is inverse-CDF based (analytic for uniforms, bracketed bisection
for truncated Gaussians) so the draw count per step is fixed and runs are
reproducible from the seed alone. Mixtures first pick a part by weight and
then sample inside it, which keeps support gaps empty. Each trajectory owns
an RNG stream derived from (seed, trajectory index), so batched and
one-at-a-time simulation produce identical paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import beta

from .dynamics import DynamicsModel, eval_point
from .geometry import Box
from .noise import Mixture, NoiseModel

TERM_HORIZON = "horizon"
TERM_GOAL = "goal-hit"
TERM_AVOID = "avoid-hit"
TERM_LEFT = "left-domain"


@dataclass(frozen=True)
class ReachAvoidRegions:
    """Geometric reach-avoid data for simulation: stay inside ``domain``,
    reach any goal box, never touch an avoid box. Leaving the domain counts
    as a violation, matching the absorbing unsafe state."""

    domain: Box
    goals: tuple[Box, ...]
    avoids: tuple[Box, ...] = ()


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # shape (length, n)
    termination: str

    @property
    def length(self) -> int:
        return int(self.states.shape[0])

    @property
    def satisfied(self) -> bool:
        return self.termination == TERM_GOAL


def _classify_point(x: np.ndarray, regions: ReachAvoidRegions) -> Optional[str]:
    if any(g.contains_point(x) for g in regions.goals):
        return TERM_GOAL
    if any(a.contains_point(x) for a in regions.avoids):
        return TERM_AVOID
    if not regions.domain.contains_point(x):
        return TERM_LEFT
    return None


def sample_noise(noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """One noise vector via inverse-CDF sampling, one component at a time."""
    out = np.empty(noise.n)
    for i, comp in enumerate(noise.components):
        if isinstance(comp, Mixture):
            u_part = rng.random()
            cum = np.cumsum(comp.weights)
            part = comp.parts[int(np.searchsorted(cum, u_part, side="right"))]
            out[i] = part.inverse_cdf(rng.random())
        else:
            out[i] = comp.inverse_cdf(rng.random())
    return out


def simulate(
    model: DynamicsModel,
    noise: NoiseModel,
    x0: Sequence[float],
    k: int,
    regions: ReachAvoidRegions,
    rng: np.random.Generator,
) -> Trajectory:
    """Roll out at most k steps, stopping at the first goal hit, avoid hit,
    or domain exit."""
    x = np.asarray(x0, dtype=float)
    states = [x]
    cause = _classify_point(x, regions)
    if cause is None:
        for _ in range(k):
            w = sample_noise(noise, rng)
            x = eval_point(model, x, w)
            states.append(x)
            cause = _classify_point(x, regions)
            if cause is not None:
                break
        else:
            cause = TERM_HORIZON
    return Trajectory(states=np.stack(states, axis=0), termination=cause)


def _batch_sample_noise(
    noise: NoiseModel, rngs: Sequence[np.random.Generator]
) -> np.ndarray:
    """Noise vectors for several trajectories, consuming each trajectory's
    stream exactly as sample_noise would."""
    m = len(rngs)
    out = np.empty((m, noise.n))
    for i, comp in enumerate(noise.components):
        if isinstance(comp, Mixture):
            # per stream the draw order matches sample_noise: selector, value
            u_part = np.array([rng.random() for rng in rngs])
            u_val = np.array([rng.random() for rng in rngs])
            cum = np.cumsum(comp.weights)
            idx = np.searchsorted(cum, u_part, side="right")
            col = np.empty(m)
            for part_i, part in enumerate(comp.parts):
                mask = idx == part_i
                if mask.any():
                    col[mask] = np.asarray(part.inverse_cdf(u_val[mask]))
            out[:, i] = col
        else:
            u = np.array([rng.random() for rng in rngs])
            out[:, i] = np.asarray(comp.inverse_cdf(u))
    return out


def clopper_pearson(
    successes: int, trials: int, confidence: float
) -> tuple[float, float]:
    """Two-sided exact binomial confidence interval."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    alpha = 1.0 - confidence
    if successes == 0:
        lo = 0.0
    else:
        lo = float(beta.ppf(alpha / 2.0, successes, trials - successes + 1))
    if successes == trials:
        hi = 1.0
    else:
        hi = float(beta.ppf(1.0 - alpha / 2.0, successes + 1, trials - successes))
    return lo, hi


def estimate_satisfaction(
    model: DynamicsModel,
    noise: NoiseModel,
    regions: ReachAvoidRegions,
    x0: Sequence[float],
    n_samples: int,
    horizon: int,
    seed,
    confidence: float = 0.99,
) -> tuple[float, tuple[float, float]]:
    """Empirical satisfaction frequency from x0 with a Clopper-Pearson CI.

    Trajectories advance in lockstep but each consumes its own RNG stream,
    so the sampled paths match n_samples independent simulate() calls with
    rngs seeded from (*seed, index). ``seed`` is an int or a tuple of ints.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    base = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    rngs = [np.random.default_rng([*base, i]) for i in range(n_samples)]
    x0 = np.asarray(x0, dtype=float)

    start_cause = _classify_point(x0, regions)
    if start_cause is not None:
        successes = n_samples if start_cause == TERM_GOAL else 0
        estimate = successes / n_samples
        return estimate, clopper_pearson(successes, n_samples, confidence)

    x = np.tile(x0, (n_samples, 1))
    alive = np.arange(n_samples)
    successes = 0
    for _ in range(horizon):
        if len(alive) == 0:
            break
        w = _batch_sample_noise(noise, [rngs[i] for i in alive])
        x_alive = eval_point(model, x[alive], w)
        x[alive] = x_alive

        in_goal = np.zeros(len(alive), dtype=bool)
        for g in regions.goals:
            mask = np.ones(len(alive), dtype=bool)
            for d in range(len(x0)):
                ival = g.component(d)
                mask &= (x_alive[:, d] >= ival.lo) & (x_alive[:, d] <= ival.hi)
            in_goal |= mask
        in_avoid = np.zeros(len(alive), dtype=bool)
        for a in regions.avoids:
            mask = np.ones(len(alive), dtype=bool)
            for d in range(len(x0)):
                ival = a.component(d)
                mask &= (x_alive[:, d] >= ival.lo) & (x_alive[:, d] <= ival.hi)
            in_avoid |= mask
        in_domain = np.ones(len(alive), dtype=bool)
        for d in range(len(x0)):
            ival = regions.domain.component(d)
            in_domain &= (x_alive[:, d] >= ival.lo) & (x_alive[:, d] <= ival.hi)

        resolved = in_goal | in_avoid | ~in_domain
        successes += int(np.count_nonzero(in_goal))
        alive = alive[~resolved]

    estimate = successes / n_samples
    return estimate, clopper_pearson(successes, n_samples, confidence)


def write_trajectories(trajectories: Sequence[Trajectory], path) -> None:
    """One row per step: trajectory id, step, state components, termination."""
    if not trajectories:
        dim = 0
    else:
        dim = trajectories[0].states.shape[1]
    header = ",".join(
        ["trajectory", "step"] + [f"x{d + 1}" for d in range(dim)] + ["termination"]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for tid, traj in enumerate(trajectories):
            for step in range(traj.length):
                coords = ",".join(repr(float(v)) for v in traj.states[step])
                fh.write(f"{tid},{step},{coords},{traj.termination}\n")
