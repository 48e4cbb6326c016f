"""Independent oracles used across the test suite.

Everything here recomputes quantities from first principles (direct kernel
evaluation, exhaustive enumeration, direct linear solves) and stays off the
code paths it is checking.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from imcverify.dynamics import ADDITIVE, MULTIPLICATIVE, eval_point
from imcverify.geometry import Box
from imcverify.noise import NoiseModel


def kernel_grid_extrema(
    model, noise: NoiseModel, q: Box, target: Box, points: int = 200
) -> tuple[float, float]:
    """Min and max over a grid of x in q of the exact one-step kernel
    T(target | x) = Pr(f(x, w) in target).

    Uses the per-component CDFs directly: for g(x) + w the component mass is
    F(B - g(x)) - F(A - g(x)); for g(x) * w with positive g it is
    F(B / g(x)) - F(A / g(x)). No noise partitions are involved.
    """
    axes = [
        np.linspace(q.component(d).lo, q.component(d).hi, points)
        for d in range(q.dim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    xs = np.stack([m.ravel() for m in mesh], axis=-1)
    neutral = 0.0 if model.structure == ADDITIVE else 1.0
    w = np.full_like(xs, neutral)
    g = eval_point(model, xs, w)  # g(x) exactly, by neutral noise

    t = np.ones(xs.shape[0])
    for d in range(q.dim):
        comp = noise.components[d]
        a, b = target.component(d).lo, target.component(d).hi
        if model.structure == ADDITIVE:
            lo, hi = a - g[:, d], b - g[:, d]
        elif model.structure == MULTIPLICATIVE:
            assert np.all(g[:, d] > 0.0)
            lo, hi = a / g[:, d], b / g[:, d]
        else:
            raise ValueError("kernel oracle supports structured models only")
        t *= np.clip(np.asarray(comp.cdf(hi)) - np.asarray(comp.cdf(lo)), 0.0, 1.0)
    return float(t.min()), float(t.max())


def sweep_best_bounds(
    structure: str,
    postf: tuple[float, float],
    target: tuple[float, float],
    component,
    step: float = 1e-3,
) -> tuple[float, float]:
    """Best lower bound and best upper bound achievable by any 3-interval
    noise partition with cut points on a uniform grid over the support.

    Each candidate partition {(-inf,t1], [t1,t2], [t2,inf)} is scored by
    applying the containment/intersection indicators to the exact posterior
    of each cell, then weighting by the cell mass. Cut points outside the
    support cannot change the score, so sweeping the padded support hull is
    exhaustive at the given resolution.
    """
    c, d = postf
    a, b = target
    sup = component.support
    ts = np.arange(sup.lo - step, sup.hi + 2 * step, step)
    cdf = np.asarray(component.cdf(ts))
    k = len(ts)
    t1 = ts[:, None]
    t2 = ts[None, :]
    f1 = cdf[:, None]
    f2 = cdf[None, :]
    valid = t1 <= t2

    if structure == ADDITIVE:
        # posterior of cell [u, v] is [c + u, d + v]
        def contained(u, v):
            return (c + u >= a) & (d + v <= b)

        def intersects(u, v):
            return (c + u <= b) & (d + v >= a)

        lower = np.where(contained(t1, t2), f2 - f1, 0.0)
        upper = np.where(intersects(t1, t2), f2 - f1, 0.0)
        # left cell (-inf, t1]: posterior (-inf, d + t1]
        upper = upper + np.where(d + t1 >= a, f1, 0.0)
        # right cell [t2, inf): posterior [c + t2, inf)
        upper = upper + np.where(c + t2 <= b, 1.0 - f2, 0.0)
    elif structure == MULTIPLICATIVE:
        assert min(a, b, c, d) > 0.0 and sup.lo > 0.0
        lower = np.where((c * t1 >= a) & (d * t2 <= b), f2 - f1, 0.0)
        upper = np.where((c * t1 <= b) & (d * t2 >= a), f2 - f1, 0.0)
        # left cell (0, t1]: posterior (0, d * t1]
        upper = upper + np.where(d * t1 >= a, f1, 0.0)
        # right cell [t2, inf): posterior [c * t2, inf)
        upper = upper + np.where(c * t2 <= b, 1.0 - f2, 0.0)
    else:
        raise ValueError(f"unsupported structure {structure!r}")

    best_lower = float(np.where(valid, lower, -np.inf).max())
    best_upper = float(np.where(valid, upper, np.inf).min())
    return best_lower, best_upper


def extreme_by_vertex_enumeration(values, lows, ups, mode: str) -> float:
    """Extreme expectation over the adversary polytope by enumerating its
    vertices: all but one coordinate at a bound, the free one absorbing the
    remaining mass."""
    m = len(values)
    tol = 1e-12
    best = None
    for free in range(m):
        others = [i for i in range(m) if i != free]
        for bits in product((0, 1), repeat=m - 1):
            gamma = np.zeros(m)
            for i, bit in zip(others, bits):
                gamma[i] = ups[i] if bit else lows[i]
            gamma[free] = 1.0 - gamma.sum()
            if not (lows[free] - tol <= gamma[free] <= ups[free] + tol):
                continue
            e = float(np.dot(gamma, values))
            if best is None:
                best = e
            elif mode == "min":
                best = min(best, e)
            else:
                best = max(best, e)
    assert best is not None, "no feasible vertex found"
    return best


def chain_reach_probability(rows, goal: set[int], avoid: set[int]) -> np.ndarray:
    """Exact reach probability of a Markov chain by direct linear solve.

    ``rows[i]`` maps successor index to probability. Goal states get value
    1, avoid states 0; transient values solve (I - P_tt) p = P_tg 1.
    """
    n = len(rows)
    transient = [i for i in range(n) if i not in goal and i not in avoid]
    idx = {s: j for j, s in enumerate(transient)}
    a = np.zeros((len(transient), len(transient)))
    b = np.zeros(len(transient))
    for s in transient:
        for t, p in rows[s].items():
            if t in goal:
                b[idx[s]] += p
            elif t in idx:
                a[idx[s], idx[t]] += p
    p_t = np.linalg.solve(np.eye(len(transient)) - a, b)
    out = np.zeros(n)
    for s in goal:
        out[s] = 1.0
    for s, j in idx.items():
        out[s] = p_t[j]
    return out


def empirical_kernel(model, noise: NoiseModel, x, target: Box, n: int, seed: int):
    """Monte Carlo estimate of T(target | x) with its standard error."""
    rng = np.random.default_rng(seed)
    xs = np.tile(np.asarray(x, dtype=float), (n, 1))
    ws = np.empty((n, noise.n))
    for d, comp in enumerate(noise.components):
        ws[:, d] = np.asarray(comp.inverse_cdf(rng.random(n)))
    ys = eval_point(model, xs, ws)
    inside = np.ones(n, dtype=bool)
    for d in range(target.dim):
        ival = target.component(d)
        inside &= (ys[:, d] >= ival.lo) & (ys[:, d] <= ival.hi)
    p = float(np.count_nonzero(inside)) / n
    sigma = float(np.sqrt(max(p * (1.0 - p), 1.0 / n) / n))
    return p, sigma
