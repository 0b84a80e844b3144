"""Exact Gaussian-process regression on the unit cube.

Matern-5/2 kernel with per-dimension lengthscales, constant prior mean,
Gaussian likelihood.  Everything is closed form: posterior mean/variance via
a cached Cholesky factor of (K + noise * I), log marginal likelihood with
analytic gradients in log-hyperparameter space, type-II maximum likelihood
by multi-restart L-BFGS-B, and joint posterior sampling over finite
candidate sets.

Inputs are expected in [0,1]^d and targets in standardized units; the
:class:`MultiOutputGP` wrapper owns the per-output standardization and keeps
one independent model per measured quantity.

All randomness is explicit (seeds in, arrays out) and fitted models are
immutable, so instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import (
    ConfigurationError,
    ContractViolationError,
    NumericalConditioningError,
)

__all__ = [
    "KernelHyperparameters",
    "LogNormalPriors",
    "GPModel",
    "MultiOutputGP",
    "matern52",
    "fit_hyperparameters",
    "fit_gp",
    "sample_posterior_joint",
    "HYPER_BOUNDS",
]

SQRT5 = math.sqrt(5.0)

# Bounds for type-II ML, in normalized-input / standardized-output units.
HYPER_BOUNDS = {
    "lengthscale": (0.005, 10.0),
    "signal_variance": (0.01, 20.0),
    "noise_variance": (1e-6, 1.0),
}

JITTER_SCHEDULE = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass(frozen=True)
class KernelHyperparameters:
    """Matern-5/2 kernel parameters plus the Gaussian observation noise."""

    lengthscales: tuple[float, ...]
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = tuple(float(v) for v in self.lengthscales)
        object.__setattr__(self, "lengthscales", ls)
        if len(ls) == 0:
            raise ConfigurationError("at least one lengthscale required")
        if not all(math.isfinite(v) and v > 0 for v in ls):
            raise ConfigurationError("lengthscales must be finite and > 0")
        if not (math.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise ConfigurationError("signal_variance must be finite and > 0")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise ConfigurationError("noise_variance must be finite and >= 0")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def lengthscale_array(self) -> np.ndarray:
        return np.asarray(self.lengthscales, dtype=float)

    def to_log_vector(self) -> np.ndarray:
        return np.log(
            np.concatenate(
                [self.lengthscale_array(), [self.signal_variance, self.noise_variance]]
            )
        )

    @classmethod
    def from_log_vector(cls, log_theta: np.ndarray) -> "KernelHyperparameters":
        theta = np.exp(np.asarray(log_theta, dtype=float))
        return cls(tuple(theta[:-2]), float(theta[-2]), float(theta[-1]))

    def to_dict(self) -> dict:
        return {
            "lengthscales": list(self.lengthscales),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "KernelHyperparameters":
        return cls(
            tuple(payload["lengthscales"]),
            payload["signal_variance"],
            payload["noise_variance"],
        )

    @classmethod
    def default(cls, dim: int) -> "KernelHyperparameters":
        return cls((0.3,) * dim, 1.0, 0.01)


@dataclass(frozen=True)
class LogNormalPriors:
    """Independent log-normal priors centered on reference hyperparameters.

    Used as a transfer-learning warm start: the log-density (up to constants)
    is added to the marginal likelihood during fitting, pulling new fits
    toward hyperparameters learned on a related material.
    """

    reference: KernelHyperparameters
    log_std: float = 0.5

    def penalty_and_grad(self, log_theta: np.ndarray) -> tuple[float, np.ndarray]:
        ref = self.reference.to_log_vector()
        z = (log_theta - ref) / self.log_std
        return -0.5 * float(z @ z), -z / self.log_std

    def to_dict(self) -> dict:
        return {"reference": self.reference.to_dict(), "log_std": self.log_std}

    @classmethod
    def from_dict(cls, payload: dict) -> "LogNormalPriors":
        return cls(KernelHyperparameters.from_dict(payload["reference"]), payload["log_std"])


def _check_points(x: np.ndarray, dim: int):
    if x.shape[-1] != dim:
        raise ContractViolationError(
            f"point dimension {x.shape[-1]} != lengthscale count {dim}"
        )
    if not np.all(np.isfinite(x)):
        raise ContractViolationError("non-finite input point")


def matern52(x, x_other, hyper: KernelHyperparameters) -> float:
    """Covariance between two points:
    sigma_f^2 (1 + sqrt5 r + 5/3 r^2) exp(-sqrt5 r),
    r^2 = sum_j (x_j - x'_j)^2 / l_j^2.
    """
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    if x.shape != x_other.shape:
        raise ContractViolationError("point dimension mismatch")
    _check_points(x, hyper.dim)
    _check_points(x_other, hyper.dim)
    ls = hyper.lengthscale_array()
    r2 = float(np.sum(((x - x_other) / ls) ** 2))
    r = math.sqrt(r2)
    return hyper.signal_variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * math.exp(-SQRT5 * r)


def _scaled_sqdist(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """Pairwise squared distance of rows of a and b after lengthscale scaling."""
    a_s = a / lengthscales
    b_s = b / lengthscales
    aa = np.sum(a_s * a_s, axis=1)[:, None]
    bb = np.sum(b_s * b_s, axis=1)[None, :]
    sq = aa + bb - 2.0 * (a_s @ b_s.T)
    return np.maximum(sq, 0.0)


def _matern52_gram(a: np.ndarray, b: np.ndarray, hyper: KernelHyperparameters) -> np.ndarray:
    r = np.sqrt(_scaled_sqdist(a, b, hyper.lengthscale_array()))
    return hyper.signal_variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def _cholesky_with_jitter(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky of a symmetric matrix, escalating diagonal jitter 1e-8..1e-4."""
    n = matrix.shape[0]
    eye = np.eye(n)
    for jitter in JITTER_SCHEDULE:
        try:
            return np.linalg.cholesky(matrix + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalConditioningError(
        f"matrix of size {n} not positive definite after jitter {JITTER_SCHEDULE[-1]:g}"
    )


class GPModel:
    """Immutable exact-GP posterior over standardized targets.

    Builds and caches the Cholesky factor of (K + noise * S + jitter * I)
    at construction; prediction and sampling only read it.

    Replicated observations can be supplied in collapsed form: row g then
    carries the mean of m_g raw values with ``noise_scales[g] = 1/m_g``, and
    ``replicates=(extra_count, log_m_sum, residual_ss)`` holds the raw data's
    within-group statistics (count of collapsed points, sum of log m_g, and
    pooled residual sum of squares).  The marginal likelihood then equals the
    raw-data likelihood exactly:

        LML_raw = LML_mean_model
                  - extra_count/2 * log(2 pi noise)
                  - log_m_sum / 2
                  - residual_ss / (2 noise)
    """

    def __init__(
        self,
        train_inputs: np.ndarray,
        train_targets: np.ndarray,
        hyperparameters: KernelHyperparameters,
        prior_mean: float = 0.0,
        hyper_priors: LogNormalPriors | None = None,
        noise_scales: np.ndarray | None = None,
        replicates: tuple[int, float, float] | None = None,
    ):
        x = np.atleast_2d(np.asarray(train_inputs, dtype=float))
        y = np.asarray(train_targets, dtype=float).ravel()
        if x.size == 0:
            x = np.zeros((0, hyperparameters.dim))
        if x.shape[0] != y.shape[0]:
            raise ContractViolationError("inputs and targets disagree on n")
        if x.shape[0] > 0:
            _check_points(x, hyperparameters.dim)
            if not np.all(np.isfinite(y)):
                raise ContractViolationError("non-finite training target")
        self.train_inputs = x
        self.train_targets = y
        self.hyperparameters = hyperparameters
        self.prior_mean = float(prior_mean)
        self.hyper_priors = hyper_priors
        self.n = x.shape[0]
        if noise_scales is not None:
            self.noise_scales = np.asarray(noise_scales, dtype=float).ravel()
            if self.noise_scales.shape != (self.n,):
                raise ContractViolationError("noise_scales must have one entry per row")
        else:
            self.noise_scales = None
        self.replicates = replicates
        if self.n > 0:
            k_train = _matern52_gram(x, x, hyperparameters)
            scales = self.noise_scales if self.noise_scales is not None else 1.0
            k_train[np.diag_indices(self.n)] += hyperparameters.noise_variance * scales
            self._chol, self.jitter_used = _cholesky_with_jitter(k_train)
            resid = y - self.prior_mean
            self._alpha = cho_solve((self._chol, True), resid)
        else:
            self._chol = None
            self.jitter_used = 0.0
            self._alpha = np.zeros(0)

    # -- prediction ---------------------------------------------------------

    def predict(self, x_test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of x_test."""
        x_test = np.atleast_2d(np.asarray(x_test, dtype=float))
        _check_points(x_test, self.hyperparameters.dim)
        prior_var = self.hyperparameters.signal_variance
        if self.n == 0:
            mean = np.full(x_test.shape[0], self.prior_mean)
            var = np.full(x_test.shape[0], prior_var)
            return mean, var
        k_star = _matern52_gram(x_test, self.train_inputs, self.hyperparameters)
        mean = self.prior_mean + k_star @ self._alpha
        v = solve_triangular(self._chol, k_star.T, lower=True, check_finite=False)
        var = prior_var - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 1e-12)

    def predict_point(self, x: np.ndarray) -> tuple[float, float]:
        mean, var = self.predict(np.atleast_2d(x))
        return float(mean[0]), float(var[0])

    def posterior_joint(self, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Joint posterior mean vector and covariance matrix on a finite set."""
        candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
        _check_points(candidates, self.hyperparameters.dim)
        k_cc = _matern52_gram(candidates, candidates, self.hyperparameters)
        if self.n == 0:
            return np.full(candidates.shape[0], self.prior_mean), k_cc
        k_star = _matern52_gram(candidates, self.train_inputs, self.hyperparameters)
        mean = self.prior_mean + k_star @ self._alpha
        v = solve_triangular(self._chol, k_star.T, lower=True, check_finite=False)
        cov = k_cc - v.T @ v
        return mean, cov

    # -- marginal likelihood --------------------------------------------------

    def log_marginal_likelihood(self) -> float:
        """Full log-density (constant included) of the targets under the
        prior, raw replicated points included when collapsed."""
        if self.n < 1:
            raise ContractViolationError("log marginal likelihood needs n >= 1")
        resid = self.train_targets - self.prior_mean
        data_fit = -0.5 * float(resid @ self._alpha)
        log_det = -float(np.sum(np.log(np.diag(self._chol))))
        value = data_fit + log_det - 0.5 * self.n * math.log(2.0 * math.pi)
        if self.replicates is not None:
            extra, log_m_sum, residual_ss = self.replicates
            noise = self.hyperparameters.noise_variance
            value -= 0.5 * extra * math.log(2.0 * math.pi * noise)
            value -= 0.5 * log_m_sum
            value -= residual_ss / (2.0 * noise)
        return value

    def log_marginal_likelihood_and_grad(self) -> tuple[float, np.ndarray]:
        """LML value and its gradient w.r.t. the log-hyperparameter vector
        [log l_1 .. log l_d, log sigma_f^2, log sigma_n^2].
        """
        if self.n < 1:
            raise ContractViolationError("log marginal likelihood needs n >= 1")
        value = self.log_marginal_likelihood()
        hyper = self.hyperparameters
        x = self.train_inputs
        ls = hyper.lengthscale_array()
        n, d = x.shape
        k_inv = cho_solve((self._chol, True), np.eye(n))
        # P = alpha alpha^T - K_y^-1 so that dLML/dtheta = 0.5 tr(P dK/dtheta)
        p_mat = np.outer(self._alpha, self._alpha) - k_inv
        sq = _scaled_sqdist(x, x, ls)
        r = np.sqrt(sq)
        exp_term = np.exp(-SQRT5 * r)
        kernel = hyper.signal_variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * sq) * exp_term
        # dK/dr * dr/d(log l_j) collapses to prefactor * D_j / l_j^2 with no
        # singularity at r = 0.
        prefactor = (5.0 / 3.0) * hyper.signal_variance * (1.0 + SQRT5 * r) * exp_term
        grad = np.empty(d + 2)
        pp = p_mat * prefactor
        for j in range(d):
            diff = x[:, j][:, None] - x[:, j][None, :]
            grad[j] = 0.5 * float(np.sum(pp * (diff * diff))) / (ls[j] ** 2)
        grad[d] = 0.5 * float(np.sum(p_mat * kernel))
        scales = self.noise_scales if self.noise_scales is not None else np.ones(n)
        grad[d + 1] = 0.5 * float(np.diag(p_mat) @ scales) * hyper.noise_variance
        if self.replicates is not None:
            extra, _, residual_ss = self.replicates
            grad[d + 1] += -0.5 * extra + residual_ss / (2.0 * hyper.noise_variance)
        return value, grad

    def penalized_lml(self) -> float:
        value = self.log_marginal_likelihood()
        if self.hyper_priors is not None:
            pen, _ = self.hyper_priors.penalty_and_grad(
                self.hyperparameters.to_log_vector()
            )
            value += pen
        return value

    def with_hyperparameters(self, hyper: KernelHyperparameters) -> "GPModel":
        return GPModel(
            self.train_inputs,
            self.train_targets,
            hyper,
            self.prior_mean,
            self.hyper_priors,
            noise_scales=self.noise_scales,
            replicates=self.replicates,
        )


def _fit_bounds(dim: int) -> list[tuple[float, float]]:
    lo_l, hi_l = HYPER_BOUNDS["lengthscale"]
    lo_s, hi_s = HYPER_BOUNDS["signal_variance"]
    lo_n, hi_n = HYPER_BOUNDS["noise_variance"]
    bounds = [(math.log(lo_l), math.log(hi_l))] * dim
    bounds.append((math.log(lo_s), math.log(hi_s)))
    bounds.append((math.log(lo_n), math.log(hi_n)))
    return bounds


def fit_hyperparameters(
    model: GPModel,
    restarts: int = 8,
    seed: int = 0,
    maxiter: int = 60,
) -> KernelHyperparameters:
    """Type-II maximum likelihood over log-hyperparameters.

    Multi-restart L-BFGS-B on the (prior-penalized, if the model carries
    priors) log marginal likelihood.  The first start is the model's current
    hyperparameters; the rest are seeded log-uniform draws.  Returns the best
    point seen across every restart's trajectory, so the result is never
    worse than any initialization.
    """
    if model.n < 2:
        raise ContractViolationError("hyperparameter fitting needs n >= 2")
    d = model.hyperparameters.dim
    priors = model.hyper_priors
    bounds = _fit_bounds(d)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def objective(log_theta: np.ndarray) -> tuple[float, np.ndarray]:
        hyper = KernelHyperparameters.from_log_vector(log_theta)
        try:
            candidate = model.with_hyperparameters(hyper)
            value, grad = candidate.log_marginal_likelihood_and_grad()
        except NumericalConditioningError:
            return 1e12, np.zeros(d + 2)
        if priors is not None:
            pen, pen_grad = priors.penalty_and_grad(log_theta)
            value += pen
            grad = grad + pen_grad
        return -value, -grad

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5F17]))
    starts = [np.clip(model.hyperparameters.to_log_vector(), lo, hi)]
    # Focused draw region: wide-open corners of the box waste restarts.
    draw_lo = np.concatenate([np.full(d, math.log(0.05)), [math.log(0.1), math.log(1e-5)]])
    draw_hi = np.concatenate([np.full(d, math.log(4.0)), [math.log(10.0), math.log(0.3)]])
    for _ in range(max(0, restarts - 1)):
        starts.append(rng.uniform(draw_lo, draw_hi))

    best_value = -np.inf
    best_theta = None
    failures = 0
    for start in starts:
        f0, _ = objective(start)
        if f0 < 1e11 and -f0 > best_value:
            best_value, best_theta = -f0, np.array(start)
        try:
            result = minimize(
                objective,
                start,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": maxiter, "maxfun": 2 * maxiter + 10},
            )
        except (NumericalConditioningError, FloatingPointError):
            failures += 1
            continue
        f1, _ = objective(result.x)
        if f1 < 1e11 and -f1 > best_value:
            best_value, best_theta = -f1, np.array(result.x)
    if best_theta is None:
        raise NumericalConditioningError(
            f"all {len(starts)} restarts failed conditioning ({failures} raised)"
        )
    return KernelHyperparameters.from_log_vector(best_theta)


def fit_gp(
    train_inputs: np.ndarray,
    train_targets: np.ndarray,
    dim: int,
    restarts: int = 8,
    seed: int = 0,
    warm_start: KernelHyperparameters | None = None,
    hyper_priors: LogNormalPriors | None = None,
    maxiter: int = 60,
    noise_scales: np.ndarray | None = None,
    replicates: tuple[int, float, float] | None = None,
) -> GPModel:
    """Build a model, fit its hyperparameters, and return the refitted model.

    ``restarts=0`` skips optimization and keeps the warm-start (or default)
    hyperparameters as-is."""
    initial = warm_start if warm_start is not None else KernelHyperparameters.default(dim)
    model = GPModel(
        train_inputs,
        train_targets,
        initial,
        0.0,
        hyper_priors,
        noise_scales=noise_scales,
        replicates=replicates,
    )
    if model.n < 2 or restarts < 1:
        return model
    fitted = fit_hyperparameters(model, restarts=restarts, seed=seed, maxiter=maxiter)
    return model.with_hyperparameters(fitted)


def sample_posterior_joint(
    model: GPModel, candidates: np.ndarray, count: int, seed: int
) -> np.ndarray:
    """``count`` independent draws from the joint posterior on the candidate
    set; returns a (count, n_candidates) matrix.
    """
    if count < 1:
        raise ContractViolationError("sample count must be >= 1")
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        raise ContractViolationError("candidate set must be non-empty")
    mean, cov = model.posterior_joint(candidates)
    chol, _ = _cholesky_with_jitter(cov)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    z = rng.standard_normal((count, candidates.shape[0]))
    return mean[None, :] + z @ chol.T


class MultiOutputGP:
    """Named collection of independent GPs with per-output standardization.

    Raw targets arrive in physical units; each output is z-scored by its own
    training mean/std before fitting and predictions are mapped back, so
    removing one output's data can never move another's posterior.  Outputs
    may hold differently sized datasets (strength channels carry every raw
    repetition).
    """

    STD_FLOOR = 1e-12

    def __init__(self, dim: int):
        self.dim = dim
        self._outputs: dict[str, dict] = {}

    @property
    def output_names(self) -> list[str]:
        return list(self._outputs.keys())

    def set_output(
        self,
        name: str,
        train_inputs: np.ndarray,
        train_targets: np.ndarray,
        restarts: int = 8,
        seed: int = 0,
        warm_start: KernelHyperparameters | None = None,
        hyper_priors: LogNormalPriors | None = None,
        maxiter: int = 60,
        empty_prior_mean: float = 0.0,
        collapse_replicates: bool = False,
    ):
        x = np.atleast_2d(np.asarray(train_inputs, dtype=float))
        y = np.asarray(train_targets, dtype=float).ravel()
        if y.size == 0:
            x = np.zeros((0, self.dim))
        if y.size:
            y_mean = float(np.mean(y))
            y_std = float(np.std(y))
            if y_std < self.STD_FLOOR:
                y_std = 1.0
        else:
            y_mean, y_std = float(empty_prior_mean), 1.0
        y_standardized = (y - y_mean) / y_std
        noise_scales = None
        replicates = None
        if collapse_replicates and y.size:
            # Replace repeated rows by their mean observation (noise / m_g)
            # plus the within-group residual statistics; the marginal
            # likelihood and posterior are exactly those of the raw data.
            unique_x, inverse = np.unique(x, axis=0, return_inverse=True)
            if unique_x.shape[0] < x.shape[0]:
                groups = unique_x.shape[0]
                counts = np.bincount(inverse, minlength=groups).astype(float)
                sums = np.bincount(inverse, weights=y_standardized, minlength=groups)
                means = sums / counts
                residual_ss = float(np.sum((y_standardized - means[inverse]) ** 2))
                x = unique_x
                y_standardized = means
                noise_scales = 1.0 / counts
                replicates = (
                    int(np.sum(counts) - groups),
                    float(np.sum(np.log(counts))),
                    residual_ss,
                )
        model = fit_gp(
            x,
            y_standardized,
            self.dim,
            restarts=restarts,
            seed=seed,
            warm_start=warm_start,
            hyper_priors=hyper_priors,
            maxiter=maxiter,
            noise_scales=noise_scales,
            replicates=replicates,
        )
        self._outputs[name] = {"model": model, "y_mean": y_mean, "y_std": y_std}

    def model(self, name: str) -> GPModel:
        return self._outputs[name]["model"]

    def scaling(self, name: str) -> tuple[float, float]:
        entry = self._outputs[name]
        return entry["y_mean"], entry["y_std"]

    def hyperparameters(self, name: str) -> KernelHyperparameters:
        return self._outputs[name]["model"].hyperparameters

    def predict(self, x: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per-output posterior mean/variance in physical units."""
        result = {}
        for name, entry in self._outputs.items():
            try:
                mean_s, var_s = entry["model"].predict(x)
            except (ContractViolationError, NumericalConditioningError) as err:
                raise type(err)(f"output '{name}': {err}") from err
            result[name] = (
                mean_s * entry["y_std"] + entry["y_mean"],
                var_s * entry["y_std"] ** 2,
            )
        return result

    def sample_joint(
        self, candidates: np.ndarray, count: int, seed: int
    ) -> dict[str, np.ndarray]:
        """One (count, n_candidates) physical-unit sample matrix per output.

        Output draws are mutually independent; per-output seeds are spawned
        from ``seed`` in insertion order, so the full result is reproducible.
        """
        child_seeds = np.random.SeedSequence(int(seed)).spawn(len(self._outputs))
        result = {}
        for (name, entry), child in zip(self._outputs.items(), child_seeds):
            raw = sample_posterior_joint(
                entry["model"], candidates, count, child.generate_state(1)[0]
            )
            result[name] = raw * entry["y_std"] + entry["y_mean"]
        return result

    def normalized_lengthscale_weights(self) -> np.ndarray:
        """Geometric mean over fitted outputs of (l_j * d / sum l); uniform
        when nothing is fitted.  Used for the trust-region side weighting.
        """
        weights = []
        for entry in self._outputs.values():
            model = entry["model"]
            if model.n >= 2:
                ls = model.hyperparameters.lengthscale_array()
                weights.append(ls * len(ls) / np.sum(ls))
        if not weights:
            return np.ones(self.dim)
        stacked = np.exp(np.mean(np.log(np.maximum(weights, 1e-12)), axis=0))
        return stacked * len(stacked) / np.sum(stacked)
