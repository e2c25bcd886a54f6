"""Exact Gaussian-process regression with a squared-exponential kernel.

Inputs are strains (εxx, εyy, γxy) used unscaled; the kernel has a single
isotropic length scale. Predictions report the latent (noise-free) variance.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from app.config import settings

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


class GPFitError(Exception):
    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"covariance factorisation failed at maximum jitter (condition ≈ {condition:.3e})")


@dataclass(frozen=True)
class Kernel:
    sigma_f: float
    length_scale: float
    sigma_n: float

    def __post_init__(self) -> None:
        if min(self.sigma_f, self.length_scale, self.sigma_n) <= 0:
            raise ValueError(f"kernel parameters must be positive: {self}")

    @classmethod
    def from_log(cls, theta: NDArray[np.float64]) -> "Kernel":
        sf, ell, sn = np.exp(theta)
        return cls(float(sf), float(ell), float(sn))

    @property
    def log_params(self) -> NDArray[np.float64]:
        return np.log([self.sigma_f, self.length_scale, self.sigma_n])

    def __call__(self, A: NDArray[np.float64], B: NDArray[np.float64]) -> NDArray[np.float64]:
        sq = cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean")
        return self.sigma_f**2 * np.exp(-sq / (2.0 * self.length_scale**2))


def kernel_eval(x: NDArray[np.float64], x_prime: NDArray[np.float64], kernel: Kernel) -> float:
    return float(kernel(x, x_prime)[0, 0])


@dataclass(frozen=True)
class GPModel:
    X: NDArray[np.float64]
    y: NDArray[np.float64]
    kernel: Kernel
    chol: NDArray[np.float64]
    alpha: NDArray[np.float64]
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return int(self.y.size)


def _factorize(K: NDArray[np.float64], sigma_f: float) -> tuple[NDArray[np.float64], float]:
    """Cholesky of ``K``, retrying with diagonal jitter growing ×10 up to the limit."""
    jitter = 0.0
    eye = np.eye(K.shape[0])
    while True:
        try:
            return cholesky(K + jitter * eye, lower=True), jitter
        except LinAlgError:
            jitter = settings.gp_jitter_start * sigma_f**2 if jitter == 0.0 else jitter * 10.0
            if jitter > settings.gp_jitter_max * sigma_f**2 * (1.0 + 1e-9):
                raise GPFitError(float(np.linalg.cond(K))) from None
            logger.warning("Cholesky failed, retrying with jitter %.3e", jitter)


def _check_training_set(X: NDArray[np.float64], y: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("at least one training point is required")
    if X.shape[0] != y.size:
        raise ValueError(f"{X.shape[0]} inputs but {y.size} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    return X, y


def fit(X: NDArray[np.float64], y: NDArray[np.float64], kernel: Kernel) -> GPModel:
    X, y = _check_training_set(X, y)
    K = kernel(X, X)
    K[np.diag_indices_from(K)] += kernel.sigma_n**2
    L, jitter = _factorize(K, kernel.sigma_f)
    alpha = cho_solve((L, True), y)
    return GPModel(X=X, y=y, kernel=kernel, chol=L, alpha=alpha, jitter=jitter)


def predict(model: GPModel, Xq: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Posterior mean and latent variance at each row of ``Xq``."""
    Ks = model.kernel(Xq, model.X)
    mean = Ks @ model.alpha
    v = solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    var = model.kernel.sigma_f**2 - np.einsum("ij,ij->j", v, v)
    return mean, np.maximum(var, 0.0)


def predict_mean(model: GPModel, Xq: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Posterior mean and its gradient with respect to the query, shapes (m,) and (m, d)."""
    Xq = np.atleast_2d(Xq)
    Ks = model.kernel(Xq, model.X)
    weighted = Ks * model.alpha  # (m, n)
    mean = weighted.sum(axis=1)
    grad = (weighted @ model.X - mean[:, None] * Xq) / model.kernel.length_scale**2
    return mean, grad


def log_marginal_likelihood(model: GPModel) -> float:
    return float(
        -0.5 * model.y @ model.alpha - np.log(np.diag(model.chol)).sum() - 0.5 * model.n * _LOG_2PI
    )


def lml_with_gradient(
    theta: NDArray[np.float64], X: NDArray[np.float64], y: NDArray[np.float64]
) -> tuple[float, NDArray[np.float64]]:
    """LML and its gradient with respect to log(σ_f, ℓ, σ_n)."""
    kernel = Kernel.from_log(theta)
    sq = cdist(X, X, "sqeuclidean")
    K = kernel.sigma_f**2 * np.exp(-sq / (2.0 * kernel.length_scale**2))
    Ky = K.copy()
    Ky[np.diag_indices_from(Ky)] += kernel.sigma_n**2
    L, _ = _factorize(Ky, kernel.sigma_f)
    alpha = cho_solve((L, True), y)
    lml = float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * y.size * _LOG_2PI)

    inner = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(y.size))
    grad = np.array(
        [
            0.5 * np.einsum("ij,ji->", inner, 2.0 * K),
            0.5 * np.einsum("ij,ji->", inner, K * sq / kernel.length_scale**2),
            0.5 * np.trace(inner) * 2.0 * kernel.sigma_n**2,
        ]
    )
    return lml, grad


@dataclass
class HyperparameterResult:
    kernel: Kernel
    log_marginal_likelihood: float
    all_failed: bool = False
    starts: list[tuple[Kernel, float]] = field(default_factory=list)


def log_bounds() -> NDArray[np.float64]:
    return np.log(
        np.array([settings.gp_sigma_f_bounds, settings.gp_length_scale_bounds, settings.gp_sigma_n_bounds])
    )


def optimize_hyperparameters(
    X: NDArray[np.float64],
    y: NDArray[np.float64],
    seed: int = 0,
    restarts: int | None = None,
) -> HyperparameterResult:
    """Best of several L-BFGS-B runs on the negative LML in log space.

    Starting points are a scrambled Sobol sample of the log-bounds box, so the
    result is deterministic for a given seed.
    """
    X, y = _check_training_set(X, y)
    if y.size < 2:
        raise ValueError("hyperparameter optimisation needs at least two training points")
    restarts = settings.gp_restarts if restarts is None else restarts
    bounds = log_bounds()

    sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
    unit = sampler.random_base2(m=max(int(np.ceil(np.log2(max(restarts, 1)))), 0))[:restarts]
    starts = qmc.scale(unit, bounds[:, 0], bounds[:, 1])

    def objective(theta: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        try:
            lml, grad = lml_with_gradient(theta, X, y)
        except GPFitError:
            return 1e25, np.zeros(3)
        return -lml, -grad

    best_theta: NDArray[np.float64] | None = None
    best_value = -np.inf
    successes = 0
    start_values: list[tuple[Kernel, float]] = []
    for i, theta0 in enumerate(starts):
        value0 = -objective(theta0)[0]
        start_values.append((Kernel.from_log(theta0), value0))
        if value0 > best_value:
            best_theta, best_value = theta0, value0
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds)
        if res.success:
            successes += 1
        else:
            logger.debug("Restart %d stopped early: %s", i, res.message)
        if -res.fun > best_value:
            best_theta, best_value = np.clip(res.x, bounds[:, 0], bounds[:, 1]), float(-res.fun)

    assert best_theta is not None
    all_failed = successes == 0
    if all_failed:
        logger.warning("All %d optimiser restarts failed; keeping best evaluated point", restarts)
    kernel = Kernel.from_log(best_theta)
    logger.info(
        "Hyperparameters: sigma_f=%.4g, length_scale=%.4g, sigma_n=%.4g (LML %.6g)",
        kernel.sigma_f,
        kernel.length_scale,
        kernel.sigma_n,
        best_value,
    )
    return HyperparameterResult(kernel, best_value, all_failed, start_values)
