"""Time-varying Gaussian process over mixed continuous/categorical inputs.

The kernel is a lambda-weighted sum/product combination of a squared-exponential
factor on continuous values and an overlap factor on categorical labels, each
multiplied by a time-decay factor (1 - eps)^(|t-t'|/2). Hyperparameters are fit
by MAP (uniform prior over a bound box, so effectively bounded MLE) using
projected gradient ascent with analytic gradients.

Continuous inputs are expected pre-scaled to the unit hypercube. Models with no
categorical columns use only the continuous-time factor (sigma2, eps2, lambda
are inert); this is the surrogate used when categories are chosen at random or
fixed by filtering.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

logger = logging.getLogger(__name__)

PARAM_NAMES = ("eps1", "eps2", "lengthscale", "sigma1", "sigma2", "lam", "noise")

SLIDING_WINDOW = 200  # most recent observations kept for fitting/posterior

_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class GPHyperparams:
    eps1: float = 0.1
    eps2: float = 0.1
    lengthscale: float = 1.0
    sigma1: float = 1.0
    sigma2: float = 1.0
    lam: float = 0.5
    noise: float = 0.01

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "GPHyperparams":
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, arr)})


@dataclass(frozen=True)
class HyperparamBounds:
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def default(cls, n_cont_dims: int = 1) -> "HyperparamBounds":
        diam = math.sqrt(max(n_cont_dims, 1))  # unit-hypercube diameter
        lower = np.array([0.0, 0.0, 1e-3, 1e-3, 1e-3, 0.0, 1e-6])
        upper = np.array([0.5, 0.5, 10.0 * diam, 10.0, 10.0, 1.0, 1.0])
        return cls(lower, upper)

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)

    def log_prior(self) -> float:
        # Uniform over the box: constant density 1/volume.
        return -float(np.sum(np.log(self.upper - self.lower)))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        # Log-uniform draws for the scale-like parameters give better restart
        # coverage than uniform; uniform for eps and lambda.
        theta = np.empty(7)
        for i in (0, 1, 5):
            theta[i] = rng.uniform(self.lower[i], self.upper[i])
        for i in (2, 3, 4, 6):
            theta[i] = math.exp(rng.uniform(math.log(self.lower[i]), math.log(self.upper[i])))
        return theta


# ---------------------------------------------------------------------------
# Scalar kernel pieces
# ---------------------------------------------------------------------------

def k_continuous(x, x_other, sigma1: float, lengthscale: float) -> float:
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    return sigma1 * math.exp(-float(np.sum((x - x_other) ** 2)) / lengthscale)


def k_categorical(h, h_other, sigma2: float, n_cat_dims: int) -> float:
    matches = sum(1 for a, b in zip(h, h_other) if a == b)
    return sigma2 / n_cat_dims * matches


def k_time(t: float, t_other: float, eps: float) -> float:
    return (1.0 - eps) ** (abs(t - t_other) / 2.0)


def k_mixed(z, z_other, t, t_other, theta: GPHyperparams) -> float:
    """Sum/product mixture of (continuous x time) and (categorical x time)."""
    x, h = z
    x2, h2 = z_other
    kxt = k_continuous(x, x2, theta.sigma1, theta.lengthscale) * k_time(t, t_other, theta.eps1)
    kht = k_categorical(h, h2, theta.sigma2, len(h)) * k_time(t, t_other, theta.eps2)
    return (1.0 - theta.lam) * (kxt + kht) + theta.lam * kxt * kht


# ---------------------------------------------------------------------------
# Gram matrix machinery (vectorized over precomputed pairwise structure)
# ---------------------------------------------------------------------------

def _pairwise(X1, H1, t1, X2, H2, t2):
    """(squared distances, categorical match fraction or None, |dt|)."""
    d2 = np.sum((X1[:, None, :] - X2[None, :, :]) ** 2, axis=-1) if X1.shape[1] else np.zeros(
        (len(X1), len(X2))
    )
    m = H1.shape[1]
    match = np.mean(H1[:, None, :] == H2[None, :, :], axis=-1) if m else None
    dt = np.abs(t1[:, None] - t2[None, :])
    return d2, match, dt


def _time_factor(eps: float, dt) -> np.ndarray:
    # (1 - eps)^(dt/2) via exp/log1p; cheaper than array power and exact at eps=0.
    if eps == 0.0:
        return np.ones_like(dt)
    return np.exp(math.log1p(-eps) * (0.5 * dt))


def _kernel_parts(theta: np.ndarray, d2, match, dt):
    eps1, eps2, lengthscale, sigma1, sigma2, lam, _ = theta
    kxt = sigma1 * np.exp(math.log1p(-eps1) * (0.5 * dt) - d2 / lengthscale)
    if match is None:
        return kxt, None
    kht = sigma2 * match * _time_factor(eps2, dt)
    return kxt, kht


def _kernel_matrix(theta: np.ndarray, d2, match, dt):
    kxt, kht = _kernel_parts(theta, d2, match, dt)
    if kht is None:
        return kxt
    lam = theta[5]
    return (1.0 - lam) * (kxt + kht) + lam * kxt * kht


def _prior_variance(theta: np.ndarray, mixed: bool) -> float:
    _, _, _, sigma1, sigma2, lam, _ = theta
    if not mixed:
        return sigma1
    return (1.0 - lam) * (sigma1 + sigma2) + lam * sigma1 * sigma2


def _chol_with_jitter(A: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_START
    eye = np.eye(A.shape[0])
    while jitter <= _JITTER_MAX:
        try:
            return np.linalg.cholesky(A + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError("Cholesky failed even with maximum jitter")


class GPModel:
    """Immutable GP over pre-scaled inputs with cached Cholesky factor.

    X: (n, d) continuous inputs in the unit hypercube.
    H: (n, m) integer category codes (m may be 0 for continuous-only models).
    t: (n,) round indices. y: (n,) targets (normalized rewards).
    """

    def __init__(self, X, H, t, y, theta: GPHyperparams, bounds: HyperparamBounds | None = None):
        self.y = np.asarray(y, dtype=float).reshape(-1)
        n = len(self.y)
        X = np.asarray(X, dtype=float)
        self.X = X if X.ndim == 2 else X.reshape(n, -1)
        H = np.asarray(H, dtype=int)
        self.H = H if H.ndim == 2 else (H.reshape(n, -1) if H.size else np.zeros((n, 0), dtype=int))
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.theta = theta
        self.bounds = bounds if bounds is not None else HyperparamBounds.default(self.X.shape[1])
        self._d2, self._match, self._dt = _pairwise(self.X, self.H, self.t, self.X, self.H, self.t)
        self._chol = None
        self._alpha = None

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def mixed(self) -> bool:
        return self.H.shape[1] > 0

    def _ensure_factorization(self):
        if self._chol is None:
            theta = self.theta.as_array()
            K = _kernel_matrix(theta, self._d2, self._match, self._dt)
            self._chol = _chol_with_jitter(K + theta[6] * np.eye(self.n))
            self._alpha = cho_solve((self._chol, True), self.y)

    @property
    def chol(self) -> np.ndarray:
        self._ensure_factorization()
        return self._chol

    @property
    def alpha_vec(self) -> np.ndarray:
        self._ensure_factorization()
        return self._alpha

    def posterior(self, Xq, Hq, tq):
        """Predictive mean and variance at query points (vectorized).

        Hq may be None for continuous-only models. Variance is clamped to >= 0.
        """
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        nq = len(Xq)
        if Hq is None:
            Hq = np.zeros((nq, 0), dtype=int)
        else:
            Hq = np.asarray(Hq, dtype=int).reshape(nq, -1)
        tq_arr = np.full(nq, float(tq)) if np.isscalar(tq) else np.asarray(tq, dtype=float)
        theta = self.theta.as_array()
        prior = _prior_variance(theta, self.mixed)
        if self.n == 0:
            return np.zeros(nq), np.full(nq, prior)
        d2, match, dt = _pairwise(self.X, self.H, self.t, Xq, Hq, tq_arr)
        kq = _kernel_matrix(theta, d2, match, dt)  # (n, nq)
        self._ensure_factorization()
        mu = kq.T @ self._alpha
        v = solve_triangular(self._chol, kq, lower=True, check_finite=False)
        var = prior - np.sum(v * v, axis=0)
        return mu, np.maximum(var, 0.0)

    def with_observation(self, x, h, t, y) -> "GPModel":
        """New model with one appended observation (used for hallucination)."""
        X = np.vstack([self.X, np.atleast_2d(np.asarray(x, dtype=float))])
        if self.mixed:
            H = np.vstack([self.H, np.asarray(h, dtype=int).reshape(1, -1)])
        else:
            H = np.zeros((self.n + 1, 0), dtype=int)
        return GPModel(
            X,
            H,
            np.append(self.t, float(t)),
            np.append(self.y, float(y)),
            self.theta,
            self.bounds,
        )

    def with_theta(self, theta: GPHyperparams) -> "GPModel":
        return GPModel(self.X, self.H, self.t, self.y, theta, self.bounds)


# ---------------------------------------------------------------------------
# Log marginal likelihood, analytic gradient, MAP fitting
# ---------------------------------------------------------------------------

def _lml_from_cache(theta: np.ndarray, d2, match, dt, y: np.ndarray) -> float:
    n = len(y)
    K = _kernel_matrix(theta, d2, match, dt)
    L = _chol_with_jitter(K + theta[6] * np.eye(n))
    alpha = cho_solve((L, True), y, check_finite=False)
    return float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    )


def log_marginal(model: GPModel) -> float:
    """MAP objective: Gaussian log-density of y plus the (constant) log prior."""
    if model.n == 0:
        raise ValueError("log marginal requires a nonempty dataset")
    return (
        _lml_from_cache(model.theta.as_array(), model._d2, model._match, model._dt, model.y)
        + model.bounds.log_prior()
    )


def _grad_matrices(theta: np.ndarray, d2, match, dt):
    """dK/dtheta_i for the six kernel hyperparameters (noise handled separately)."""
    eps1, eps2, lengthscale, sigma1, sigma2, lam, _ = theta
    kcont = sigma1 * np.exp(-d2 / lengthscale)
    ktime1 = _time_factor(eps1, dt)
    kxt = kcont * ktime1
    half_dt = dt / 2.0
    # The |dt|/2 prefactor kills the derivative at dt == 0.
    dtime1 = -half_dt * ktime1 / (1.0 - eps1)
    grads = {}
    if match is None:
        grads["eps1"] = kcont * dtime1
        grads["eps2"] = np.zeros_like(d2)
        grads["lengthscale"] = kxt * d2 / lengthscale**2
        grads["sigma1"] = kxt / sigma1
        grads["sigma2"] = np.zeros_like(d2)
        grads["lam"] = np.zeros_like(d2)
        return grads
    kcat = sigma2 * match
    ktime2 = _time_factor(eps2, dt)
    kht = kcat * ktime2
    dtime2 = -half_dt * ktime2 / (1.0 - eps2)
    front_x = (1.0 - lam) + lam * kht  # chain-rule weight on d(kxt)
    front_h = (1.0 - lam) + lam * kxt
    grads["eps1"] = front_x * kcont * dtime1
    grads["eps2"] = front_h * kcat * dtime2
    grads["lengthscale"] = front_x * ktime1 * kcont * d2 / lengthscale**2
    grads["sigma1"] = front_x * ktime1 * kcont / sigma1
    grads["sigma2"] = front_h * ktime2 * kcat / sigma2
    grads["lam"] = -(kxt + kht) + kxt * kht
    return grads


def _grad_from_cache(theta: np.ndarray, d2, match, dt, y: np.ndarray) -> np.ndarray:
    n = len(y)
    K = _kernel_matrix(theta, d2, match, dt)
    L = _chol_with_jitter(K + theta[6] * np.eye(n))
    alpha = cho_solve((L, True), y, check_finite=False)
    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    inner = np.outer(alpha, alpha) - Kinv
    mats = _grad_matrices(theta, d2, match, dt)
    grad = np.empty(7)
    for i, name in enumerate(PARAM_NAMES[:6]):
        grad[i] = 0.5 * np.sum(inner * mats[name])
    grad[6] = 0.5 * np.trace(inner)  # dK/d(noise) = I
    return grad


def grad_log_marginal(model: GPModel) -> np.ndarray:
    """Analytic gradient of log_marginal w.r.t. (eps1, eps2, l, s1, s2, lam, noise).

    The uniform prior contributes zero gradient inside the bound box.
    """
    if model.n == 0:
        raise ValueError("gradient requires a nonempty dataset")
    return _grad_from_cache(
        model.theta.as_array(), model._d2, model._match, model._dt, model.y
    )


def _projected_grad_norm(theta, grad, bounds):
    g = grad.copy()
    at_lower = theta <= bounds.lower + 1e-12
    at_upper = theta >= bounds.upper - 1e-12
    g[at_lower & (g < 0)] = 0.0
    g[at_upper & (g > 0)] = 0.0
    return float(np.max(np.abs(g)))


def _ascend(theta0, bounds, d2, match, dt, y, max_iter=100, tol=1e-5):
    """Projected gradient ascent with backtracking line search."""
    theta = bounds.clip(theta0.copy())
    try:
        f = _lml_from_cache(theta, d2, match, dt, y)
    except np.linalg.LinAlgError:
        return None, -math.inf
    step = 1.0  # carried across iterations so the line search rarely backtracks
    for _ in range(max_iter):
        try:
            g = _grad_from_cache(theta, d2, match, dt, y)
        except np.linalg.LinAlgError:
            break
        if _projected_grad_norm(theta, g, bounds) < tol:
            break
        step = min(step * 2.0, 1e6)
        improved = False
        while step > 1e-12:
            cand = bounds.clip(theta + step * g)
            move = cand - theta
            if np.max(np.abs(move)) < 1e-15:
                break
            try:
                fc = _lml_from_cache(cand, d2, match, dt, y)
            except np.linalg.LinAlgError:
                fc = -math.inf
            if fc > f + 1e-4 * float(g @ move):
                theta, f = cand, fc
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return theta, f


def fit(
    data_or_model,
    init: GPHyperparams,
    restarts: int = 3,
    seed: int = 0,
    bounds: HyperparamBounds | None = None,
    max_iter: int = 100,
) -> GPHyperparams:
    """MAP hyperparameter fit: local ascent from init plus random restarts.

    Accepts either a GPModel or an (X, H, t, y) tuple. With fewer than two
    observations the init is returned unchanged. Returns the best theta found;
    if every ascent fails numerically, returns init and logs a warning.
    """
    if isinstance(data_or_model, GPModel):
        model = data_or_model
        X, H, t, y = model.X, model.H, model.t, model.y
        if bounds is None:
            bounds = model.bounds
        d2, match, dt = model._d2, model._match, model._dt
    else:
        X, H, t, y = data_or_model
        y = np.asarray(y, dtype=float).reshape(-1)
        X = np.asarray(X, dtype=float).reshape(len(y), -1)
        H = np.asarray(H, dtype=int).reshape(len(y), -1)
        t = np.asarray(t, dtype=float).reshape(-1)
        if bounds is None:
            bounds = HyperparamBounds.default(X.shape[1])
        d2, match, dt = _pairwise(X, H, t, X, H, t)
        if H.shape[1] == 0:
            match = None
    if len(y) < 2:
        return init

    rng = np.random.default_rng(seed)
    starts = [init.as_array()] + [bounds.sample(rng) for _ in range(restarts)]
    best_theta, best_f = None, -math.inf
    for start in starts:
        theta, f = _ascend(start, bounds, d2, match, dt, y, max_iter=max_iter)
        if theta is not None and f > best_f:
            best_theta, best_f = theta, f
    if best_theta is None:
        logger.warning("all hyperparameter fits failed numerically; keeping init")
        return init
    return GPHyperparams.from_array(best_theta)


def windowed(X, H, t, y, window: int = SLIDING_WINDOW):
    """Keep only the most recent `window` observations (by insertion order)."""
    n = len(y)
    if n <= window:
        return X, H, t, y
    return X[-window:], H[-window:], t[-window:], y[-window:]
