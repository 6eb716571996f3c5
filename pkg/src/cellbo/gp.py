"""Gaussian-process surrogate with a Matern-5/2 kernel over a box domain.

Inputs are mapped affinely onto the unit cube and outputs standardized to
zero mean / unit variance before any kernel math; the prior mean is zero
in standardized space. Hyperparameters (one shared lengthscale, a signal
variance, and an observation-noise variance) are chosen by maximizing the
log marginal likelihood plus broad log-normal priors, via multi-start
L-BFGS-B in log-parameter space with analytic gradients.

Posterior queries reuse a cached Cholesky factorization of the noisy
covariance matrix K + noise_var * I (plus a small stabilizing jitter).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, pdist, squareform

SQRT5 = np.sqrt(5.0)

NOISE_VAR_FLOOR = 1e-6
SIGNAL_VAR_FLOOR = 1e-8
Y_STD_FLOOR = 1e-12

# Log-normal prior centers (lengthscale, signal_var, noise_var) and width,
# all in normalized-input / standardized-output units.
PRIOR_LOG_MEAN = (np.log(0.3), np.log(1.0), np.log(0.05))
PRIOR_LOG_SIGMA = 1.0

_LOG_BOUNDS = (
    (np.log(1e-2), np.log(1e2)),          # lengthscale
    (np.log(SIGNAL_VAR_FLOOR), np.log(1e4)),
    (np.log(NOISE_VAR_FLOOR), np.log(1e4)),
)


class GpFitError(RuntimeError):
    """All hyperparameter fit starts failed."""


@dataclass(frozen=True)
class GpHyper:
    """Kernel hyperparameters in normalized/standardized units."""

    lengthscale: float
    signal_var: float
    noise_var: float

    def __post_init__(self) -> None:
        if not (self.lengthscale > 0 and self.signal_var > 0):
            raise ValueError("lengthscale and signal_var must be positive")
        if self.noise_var < NOISE_VAR_FLOOR:
            raise ValueError(f"noise_var below floor {NOISE_VAR_FLOOR}")


@dataclass(frozen=True)
class Normalization:
    """Affine input map onto [0, 1]^d plus output standardization."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    y_mean: float
    y_std: float

    def normalize_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.x_lo) / (self.x_hi - self.x_lo)

    def denormalize_x(self, u: np.ndarray) -> np.ndarray:
        return self.x_lo + np.asarray(u, dtype=float) * (self.x_hi - self.x_lo)

    def standardize_y(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def destandardize_mean(self, m):
        return self.y_mean + self.y_std * m

    def destandardize_var(self, v):
        return self.y_std**2 * v


@dataclass
class ObservationDataset:
    """Evaluated points with their noisy objective values, inside a box."""

    points: np.ndarray
    values: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray

    def __post_init__(self) -> None:
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.box_lo = np.asarray(self.box_lo, dtype=float).ravel()
        self.box_hi = np.asarray(self.box_hi, dtype=float).ravel()
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("points and values must have equal length")
        if self.points.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if self.points.shape[1] != self.box_lo.shape[0]:
            raise ValueError("point dimension does not match the box")
        if np.any(self.box_lo >= self.box_hi):
            raise ValueError("box bounds must be ordered")
        eps = 1e-9
        if np.any(self.points < self.box_lo - eps) or np.any(
            self.points > self.box_hi + eps
        ):
            raise ValueError("points must lie inside the box")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def append(self, x: np.ndarray, value: float) -> None:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if np.any(x < self.box_lo - 1e-9) or np.any(x > self.box_hi + 1e-9):
            raise ValueError("point outside the box")
        self.points = np.vstack([self.points, x])
        self.values = np.append(self.values, float(value))

    def normalization(self) -> Normalization:
        """Snapshot of the current input map and output statistics."""
        std = float(np.std(self.values))
        return Normalization(
            x_lo=self.box_lo.copy(),
            x_hi=self.box_hi.copy(),
            y_mean=float(np.mean(self.values)),
            y_std=max(std, Y_STD_FLOOR),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([f"x{i}" for i in range(self.dim)] + ["value"])
            for row, val in zip(self.points, self.values):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(val))])

    @classmethod
    def from_csv(cls, path, box_lo, box_hi) -> "ObservationDataset":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            dim = len(header) - 1
            rows = [[float(v) for v in row] for row in reader]
        data = np.asarray(rows, dtype=float)
        return cls(
            points=data[:, :dim], values=data[:, dim], box_lo=box_lo, box_hi=box_hi
        )


def matern52(r):
    """Matern-5/2 correlation at scaled distance r >= 0."""
    r = np.asarray(r, dtype=float)
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def kernel_matern52(u: np.ndarray, v: np.ndarray, hyper: GpHyper) -> float:
    """Covariance between two normalized points."""
    r = float(np.linalg.norm(np.asarray(u, float) - np.asarray(v, float)))
    return hyper.signal_var * float(matern52(r / hyper.lengthscale))


def _kernel_from_dist(dist: np.ndarray, hyper: GpHyper) -> np.ndarray:
    return hyper.signal_var * matern52(dist / hyper.lengthscale)


def kernel_matrix(a: np.ndarray, b: np.ndarray, hyper: GpHyper) -> np.ndarray:
    """Cross-covariance matrix between two sets of normalized points."""
    return _kernel_from_dist(cdist(np.atleast_2d(a), np.atleast_2d(b)), hyper)


def _neg_log_map(z, dist, y, prior_mu, prior_sigma):
    """Negative (log marginal likelihood + log prior) and its gradient.

    ``z`` holds log(lengthscale), log(signal_var), log(noise_var);
    ``dist`` is the matrix of pairwise distances in normalized inputs.
    """
    n = y.shape[0]
    if not np.all(np.isfinite(y)):
        return 1e25, np.zeros(3)
    ell, sig2, noise2 = np.exp(z)
    r = dist / ell
    e = np.exp(-SQRT5 * r)
    k_corr = (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
    k_noise_free = sig2 * k_corr
    cov = k_noise_free + noise2 * np.eye(n)
    try:
        low = cholesky(cov, lower=True)
    except (np.linalg.LinAlgError, ValueError):
        return 1e25, np.zeros(3)

    alpha = cho_solve((low, True), y)
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(low))))
        - 0.5 * n * np.log(2.0 * np.pi)
    )
    zc = (z - prior_mu) / prior_sigma
    log_prior = -0.5 * float(zc @ zc)

    cov_inv = cho_solve((low, True), np.eye(n))
    outer = np.outer(alpha, alpha) - cov_inv

    # d cov / d log(lengthscale), d log(signal_var), d log(noise_var)
    dk_ell = sig2 * (5.0 / 3.0) * r * r * (1.0 + SQRT5 * r) * e
    grads = np.array(
        [
            0.5 * float(np.sum(outer * dk_ell)),
            0.5 * float(np.sum(outer * k_noise_free)),
            0.5 * noise2 * float(np.trace(outer)),
        ]
    )
    grads += -zc / prior_sigma
    return -(lml + log_prior), -grads


def log_marginal_likelihood(dataset: ObservationDataset, hyper: GpHyper) -> float:
    """Log marginal likelihood of the standardized data under ``hyper``."""
    norm = dataset.normalization()
    xn = norm.normalize_x(dataset.points)
    y = norm.standardize_y(dataset.values)
    dist = squareform(pdist(xn))
    z = np.log([hyper.lengthscale, hyper.signal_var, hyper.noise_var])
    neg, _ = _neg_log_map(z, dist, y, np.asarray(PRIOR_LOG_MEAN), PRIOR_LOG_SIGMA)
    zc = (z - np.asarray(PRIOR_LOG_MEAN)) / PRIOR_LOG_SIGMA
    return -neg + 0.5 * float(zc @ zc)


def fit(
    dataset: ObservationDataset,
    previous: GpHyper | None = None,
    *,
    maxiter: int = 200,
) -> GpHyper:
    """MAP hyperparameters by multi-start L-BFGS-B over log-parameters.

    Starts at the prior center, at a long-lengthscale point, and (when
    given) at the previous optimum as a warm start. If every start
    fails, the previous hyperparameters are kept; without a fallback a
    GpFitError is raised.
    """
    if len(dataset) < 2:
        raise ValueError("hyperparameter fitting needs at least 2 observations")

    norm = dataset.normalization()
    xn = norm.normalize_x(dataset.points)
    y = norm.standardize_y(dataset.values)
    dist = squareform(pdist(xn))
    prior_mu = np.asarray(PRIOR_LOG_MEAN)

    starts = [np.array(PRIOR_LOG_MEAN), np.log([3.0, 1.0, 0.2])]
    if previous is not None:
        starts.insert(
            0, np.log([previous.lengthscale, previous.signal_var, previous.noise_var])
        )

    best = None
    for z0 in starts:
        z0 = np.clip(z0, [b[0] for b in _LOG_BOUNDS], [b[1] for b in _LOG_BOUNDS])
        try:
            res = minimize(
                _neg_log_map,
                z0,
                args=(dist, y, prior_mu, PRIOR_LOG_SIGMA),
                jac=True,
                method="L-BFGS-B",
                bounds=_LOG_BOUNDS,
                options={"maxiter": maxiter},
            )
        except ValueError:
            continue
        if np.isfinite(res.fun) and res.fun < 1e24:
            if best is None or res.fun < best.fun:
                best = res

    if best is None:
        if previous is not None:
            return previous
        raise GpFitError("all hyperparameter fit starts failed")

    ell, sig2, noise2 = np.exp(best.x)
    return GpHyper(
        lengthscale=float(ell),
        signal_var=float(max(sig2, SIGNAL_VAR_FLOOR)),
        noise_var=float(max(noise2, NOISE_VAR_FLOOR)),
    )


class GpModel:
    """Frozen posterior: dataset snapshot plus cached Cholesky factor.

    The normalization is captured at construction time and never
    re-fitted, so posterior queries against one model are consistent
    and thread-safe.
    """

    def __init__(self, dataset: ObservationDataset, hyper: GpHyper):
        self.hyper = hyper
        self.norm = dataset.normalization()
        self.x_norm = self.norm.normalize_x(dataset.points)
        self.y_std = self.norm.standardize_y(dataset.values)

        n = self.x_norm.shape[0]
        base = kernel_matrix(self.x_norm, self.x_norm, hyper)
        base += hyper.noise_var * np.eye(n)

        low = None
        jitter = 1e-8
        while jitter <= 1e-4 * 1.0000001:
            try:
                cov = base + jitter * hyper.signal_var * np.eye(n)
                low = cholesky(cov, lower=True)
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
        if low is None:
            raise np.linalg.LinAlgError("covariance not positive definite")

        self.jitter_var = jitter * hyper.signal_var
        self.noisy_cov = cov
        self.chol = low
        self.alpha = cho_solve((low, True), self.y_std)

    @property
    def n_obs(self) -> int:
        return self.x_norm.shape[0]

    def posterior(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at query points (original units).

        Accepts a single point (1-D) or a batch (2-D); returns floats
        for a single point, arrays for a batch. Negative variances from
        round-off are clamped to zero.
        """
        q = np.asarray(q, dtype=float)
        single = q.ndim == 1
        qn = self.norm.normalize_x(np.atleast_2d(q))

        k_star = kernel_matrix(self.x_norm, qn, self.hyper)   # (N, M)
        mean_std = k_star.T @ self.alpha
        v = solve_triangular(self.chol, k_star, lower=True)
        var_std = self.hyper.signal_var - np.sum(v * v, axis=0)
        var_std = np.maximum(var_std, 0.0)

        mean = self.norm.destandardize_mean(mean_std)
        var = self.norm.destandardize_var(var_std)
        if single:
            return float(mean[0]), float(var[0])
        return mean, var
