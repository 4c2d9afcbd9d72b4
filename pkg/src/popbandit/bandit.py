"""Time-varying adversarial bandit with multiple plays (TV.EXP3.M).

Maintains exponential weights over C arms, selects B distinct arms per round
via dependent rounding with exact inclusion marginals, and caps oversized
weights so no arm's selection probability exceeds 1. A uniform additive term
(e*alpha/C of total weight per round) keeps dormant arms revivable after
reward change points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_E = math.e
_WEIGHT_RESCALE_THRESHOLD = 1e100


@dataclass
class BanditState:
    C: int
    B: int
    T: int
    weights: np.ndarray
    gamma: float
    alpha: float
    round: int = 0


@dataclass(frozen=True)
class CapResult:
    capped_weights: np.ndarray
    s0: frozenset
    nu: float


def new_bandit(C: int, B: int, T: int) -> BanditState:
    """Fresh state with unit weights and the theory-prescribed gamma, alpha.

    gamma = min(1, sqrt(C ln(C/B) / ((e-1) B T))), alpha = 1/T. When C == B
    the log term vanishes; gamma is clamped to 1 so every arm is always played.
    """
    if C < 2:
        raise ValueError("need at least 2 arms")
    if not 1 <= B <= C:
        raise ValueError("B must satisfy 1 <= B <= C")
    if T < 1:
        raise ValueError("horizon T must be >= 1")
    if C == B:
        gamma = 1.0
    else:
        gamma = min(1.0, math.sqrt(C * math.log(C / B) / ((_E - 1) * B * T)))
    return BanditState(
        C=C,
        B=B,
        T=T,
        weights=np.ones(C, dtype=float),
        gamma=gamma,
        alpha=1.0 / T,
        round=0,
    )


def cap_weights(state: BanditState) -> CapResult:
    """Cap oversized weights at nu so that no selection probability exceeds 1.

    If max_c w_c >= eta * sum(w) with eta = (1/B - gamma/C)/(1 - gamma), finds
    nu solving nu/eta = sum_{w_c >= nu} nu + sum_{w_c < nu} w_c by an exact
    piecewise-linear scan over sorted weights, then caps all w_c >= nu.
    Skipped entirely when gamma = 1 (pure exploration).
    """
    w = state.weights
    no_cap = CapResult(w.copy(), frozenset(), 0.0)
    if state.gamma >= 1.0:
        return no_cap
    eta = (1.0 / state.B - state.gamma / state.C) / (1.0 - state.gamma)
    total = w.sum()
    if w.max() < eta * total:
        return no_cap
    # Sort descending: capping the top-k leaves nu = sum(rest) / (1/eta - k).
    order = np.argsort(-w, kind="stable")
    ws = w[order]
    suffix = np.concatenate([np.cumsum(ws[::-1])[::-1][1:], [0.0]])
    nu = None
    k_cap = 0
    for k in range(1, state.C):
        denom = 1.0 / eta - k
        if denom <= 0:
            break
        cand = suffix[k - 1] / denom
        upper = ws[k - 1]
        lower = ws[k]
        if lower < cand <= upper:
            nu = cand
            k_cap = k
            break
    if nu is None:
        # All segment boundaries tied; cap everything at the common solve.
        k_cap = max(1, int(math.floor(1.0 / eta)))
        nu = suffix[k_cap - 1] / (1.0 / eta - k_cap) if 1.0 / eta > k_cap else ws[k_cap - 1]
    capped = w.copy()
    s0 = frozenset(int(i) for i in order[:k_cap])
    for i in s0:
        capped[i] = nu
    return CapResult(capped, s0, float(nu))


def arm_probabilities(state: BanditState, cap: CapResult) -> np.ndarray:
    """p_c = B((1-gamma) w_c / sum(w) + gamma/C) on the capped weights."""
    w = cap.capped_weights
    p = state.B * ((1.0 - state.gamma) * w / w.sum() + state.gamma / state.C)
    return p


def depround(B: int, p: np.ndarray, rng: np.random.Generator) -> set[int]:
    """Sample exactly B distinct indices with inclusion marginals exactly p.

    Pairwise dependent rounding: repeatedly pick two fractional coordinates
    and shift probability mass between them until one settles at 0 or 1.
    """
    p = np.asarray(p, dtype=float).copy()
    if abs(p.sum() - B) > 1e-6:
        raise ValueError(f"probabilities must sum to B={B}, got {p.sum()}")
    if np.any(p < -1e-9) or np.any(p > 1 + 1e-9):
        raise ValueError("probabilities must lie in [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    eps = 1e-12
    frac = [i for i in range(len(p)) if eps < p[i] < 1 - eps]
    while len(frac) >= 2:
        i, j = frac[0], frac[1]
        a = min(1.0 - p[i], p[j])
        b = min(p[i], 1.0 - p[j])
        if rng.random() < b / (a + b):
            p[i] += a
            p[j] -= a
        else:
            p[i] -= b
            p[j] += b
        frac = [k for k in frac if eps < p[k] < 1 - eps]
    if frac:
        # Single leftover fractional mass is rounding noise; snap it.
        p[frac[0]] = round(p[frac[0]])
    chosen = {int(i) for i in np.flatnonzero(p > 0.5)}
    if len(chosen) != B:
        raise RuntimeError("dependent rounding failed to settle at exactly B arms")
    return chosen


def select_batch(state: BanditState, rng: np.random.Generator):
    """Cap weights, compute probabilities, and draw B distinct arms."""
    if state.round >= state.T:
        raise ValueError("bandit horizon exhausted")
    cap = cap_weights(state)
    p = arm_probabilities(state, cap)
    arms = depround(state.B, p, rng)
    return arms, p, cap


def update(
    state: BanditState,
    selected: set[int],
    p: np.ndarray,
    cap: CapResult,
    g: dict[int, float],
) -> BanditState:
    """Exponential-weight update from importance-weighted rewards.

    ghat(c) = g(c)/p_c on the selected arms, 0 elsewhere. Uncapped arms get the
    multiplicative update exp(B*gamma*ghat/C); capped arms (S0) get only the
    uniform additive term, so a dominant arm cannot grow further.
    """
    if state.round >= state.T:
        raise ValueError("bandit horizon exhausted")
    if set(g) - set(selected):
        raise ValueError("reward provided for an arm outside the selected batch")
    for c, val in g.items():
        if not 0.0 <= val <= 1.0:
            raise ValueError(f"reward for arm {c} outside [0,1]: {val}")
    w = cap.capped_weights.copy()
    total = w.sum()
    additive = _E * state.alpha / state.C * total
    ghat = np.zeros(state.C)
    for c in selected:
        ghat[c] = g.get(c, 0.0) / p[c]
    for c in range(state.C):
        if c in cap.s0:
            w[c] = w[c] + additive
        else:
            w[c] = w[c] * math.exp(state.B * state.gamma * ghat[c] / state.C) + additive
    if w.max() > _WEIGHT_RESCALE_THRESHOLD:
        w /= w.max()
    return BanditState(
        C=state.C,
        B=state.B,
        T=state.T,
        weights=w,
        gamma=state.gamma,
        alpha=state.alpha,
        round=state.round + 1,
    )
