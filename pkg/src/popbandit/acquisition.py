"""Batch UCB selection of continuous values with hallucinated variance updates.

Picks are made sequentially: the mean surface is frozen at the start of the
batch, while each chosen point is appended to the covariance with a dummy
target so later picks see reduced variance there (the variance does not depend
on targets). The inner maximizer is random candidate search followed by
coordinate-wise golden-section refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gp import GPModel
from .space import ContinuousParam

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_REFINE_HALF_WIDTH = 0.05  # unit-space window around the best candidate


@dataclass(frozen=True)
class AcquisitionConfig:
    c1: float = 0.2
    c2: float = 0.4
    n_candidates: int = 1000
    n_refine_steps: int = 20

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")


def beta(t: int, cfg: AcquisitionConfig) -> float:
    """Exploration coefficient schedule: c1 + c2*ln(t), clamped to >= 0."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return max(0.0, cfg.c1 + cfg.c2 * math.log(t))


def _to_unit(x, params):
    return np.array([(v - p.lower) / (p.upper - p.lower) for v, p in zip(x, params)])


def _from_unit(u, params):
    return np.array([p.lower + v * (p.upper - p.lower) for v, p in zip(u, params)])


def select_batch_continuous(
    model: GPModel,
    params: tuple[ContinuousParam, ...],
    batch: int,
    t: int,
    cfg: AcquisitionConfig,
    rng: np.random.Generator,
    fixed_h=None,
) -> list[np.ndarray]:
    """Sequentially maximize mu_frozen(x) + sqrt(beta_t) * sigma_b(x) over the box.

    fixed_h, when given, is a length-`batch` list of integer category codes: the
    b-th pick queries the mixed kernel with that assignment fixed, and the
    hallucinated point carries it. Returns raw-scale vectors, one per pick.
    Ties in the candidate scores resolve to the lowest candidate index, so the
    result is deterministic given (model, seed, cfg).
    """
    if not params:
        raise ValueError("need at least one continuous dimension")
    if fixed_h is not None and len(fixed_h) != batch:
        raise ValueError("fixed_h must provide one assignment per pick")
    d = len(params)
    sqrt_beta = math.sqrt(beta(t, cfg))
    query_t = t + 1  # picks will be evaluated one round ahead
    mean_model = model  # frozen mean surface
    var_model = model  # accumulates hallucinations
    picks = []
    for b in range(batch):
        hq = None
        if fixed_h is not None:
            hq = np.asarray(fixed_h[b], dtype=int)
        U = rng.uniform(size=(cfg.n_candidates, d))
        Hq = np.tile(hq, (cfg.n_candidates, 1)) if hq is not None else None
        mu, _ = mean_model.posterior(U, Hq, query_t)
        _, var = var_model.posterior(U, Hq, query_t)
        scores = mu + sqrt_beta * np.sqrt(var)
        best = int(np.argmax(scores))
        u = U[best].copy()
        best_score = scores[best]

        def acq(uvec):
            hrow = hq.reshape(1, -1) if hq is not None else None
            m, _ = mean_model.posterior(uvec.reshape(1, -1), hrow, query_t)
            _, v = var_model.posterior(uvec.reshape(1, -1), hrow, query_t)
            return float(m[0] + sqrt_beta * math.sqrt(v[0]))

        for j in range(d):
            lo = max(0.0, u[j] - _REFINE_HALF_WIDTH)
            hi = min(1.0, u[j] + _REFINE_HALF_WIDTH)
            cand_u, cand_score = _golden_section(acq, u, j, lo, hi, cfg.n_refine_steps)
            if cand_score > best_score:
                u, best_score = cand_u, cand_score

        u = np.clip(u, 0.0, 1.0)
        var_model = var_model.with_observation(u, hq, query_t, 0.0)
        x = _from_unit(u, params)
        for p, v in zip(params, x):
            if not p.lower - 1e-12 <= v <= p.upper + 1e-12:
                raise RuntimeError(f"acquisition produced out-of-bounds value for {p.name}")
        picks.append(x)
    return picks


def _golden_section(acq, u, coord, lo, hi, steps):
    """Maximize acq along one coordinate within [lo, hi]; returns (point, value)."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)

    def at(val):
        v = u.copy()
        v[coord] = val
        return v

    f1, f2 = acq(at(x1)), acq(at(x2))
    for _ in range(steps):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = acq(at(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = acq(at(x2))
    if f1 >= f2:
        return at(x1), f1
    return at(x2), f2
