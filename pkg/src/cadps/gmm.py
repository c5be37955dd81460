"""The analytic Gaussian-mixture world.

A 25-component lattice prior with unit component variance, its smoothed
score at any diffusion time, the exact conditional moments E[x0|xt] and
Cov(x0|xt), and the exact Gaussian-mixture posterior under a
linear-Gaussian measurement.  These are the ground-truth oracles every
sampler is judged against, so everything here is computed in log-space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .linalg import gaussian_log_pdf

__all__ = [
    "GaussianMixture",
    "ConditionalMoments",
    "build_toy_prior",
    "smoothed_log_pdf",
    "smoothed_score",
    "smoothed_score_hvp",
    "make_tweedie_jacobian_vp",
    "conditional_moments",
    "exact_posterior",
    "sample_mixture",
]

TOY_LATTICE = list(itertools.product(range(-2, 3), repeat=2))


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted Gaussian mixture.

    ``cov`` is either a positive float (shared isotropic variance) or a
    full shared (d, d) SPD covariance, as produced by exact_posterior.
    log_weights are kept normalized (logsumexp == 0).
    """

    dim: int
    means: np.ndarray  # (K, d)
    log_weights: np.ndarray  # (K,)
    cov: float | np.ndarray = 1.0

    def __post_init__(self):
        if self.means.shape != (self.log_weights.shape[0], self.dim):
            raise ValueError("means/log_weights shape mismatch")
        if not np.all(np.isfinite(self.means)):
            raise ValueError("non-finite component means")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def is_unit_isotropic(self) -> bool:
        return np.isscalar(self.cov) and float(self.cov) == 1.0


@dataclass(frozen=True)
class ConditionalMoments:
    mean: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d), symmetric PSD


def _normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    return log_w - logsumexp(log_w)


def build_toy_prior(d: int) -> GaussianMixture:
    """25-component lattice prior: means repeat (8i, 8j) to length d."""
    if d < 2 or d % 2 != 0:
        raise ValueError(f"dimension must be even and >= 2, got {d}")
    means = np.array(
        [np.tile([8.0 * i, 8.0 * j], d // 2) for i, j in TOY_LATTICE]
    )
    log_w = _normalize_log_weights(np.zeros(len(TOY_LATTICE)))
    return GaussianMixture(dim=d, means=means, log_weights=log_w, cov=1.0)


def _require_unit_variance(prior: GaussianMixture) -> None:
    if not prior.is_unit_isotropic:
        raise ValueError("smoothing formulas require unit component variance")


def _log_resp(prior: GaussianMixture, x: np.ndarray, alpha_bar: float):
    """Log responsibilities under p_t = sum_k w_k N(x; sqrt(ab) U_k, I).

    x has shape (n, d); returns (log_resp (n, K), smoothed means (K, d)).
    Smoothed components keep unit variance because the prior components do:
    alpha_bar * 1 + (1 - alpha_bar) = 1.
    """
    means_t = np.sqrt(alpha_bar) * prior.means
    # (n, K): -0.5 ||x - m_k||^2 accumulated per component to bound memory
    n = x.shape[0]
    logp = np.empty((n, prior.n_components))
    for k in range(prior.n_components):
        diff = x - means_t[k]
        logp[:, k] = prior.log_weights[k] - 0.5 * np.einsum("nd,nd->n", diff, diff)
    logp -= logsumexp(logp, axis=1, keepdims=True)
    return logp, means_t


def smoothed_log_pdf(prior: GaussianMixture, x_t: np.ndarray, alpha_bar: float):
    """log p_t(x_t) for the diffused mixture; x_t is (d,) or (n, d)."""
    _require_unit_variance(prior)
    x = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    means_t = np.sqrt(alpha_bar) * prior.means
    logp = np.empty((x.shape[0], prior.n_components))
    for k in range(prior.n_components):
        diff = x - means_t[k]
        logp[:, k] = prior.log_weights[k] - 0.5 * np.einsum("nd,nd->n", diff, diff)
    out = logsumexp(logp, axis=1) - 0.5 * prior.dim * np.log(2.0 * np.pi)
    return out[0] if np.asarray(x_t).ndim == 1 else out


def smoothed_score(prior: GaussianMixture, x_t: np.ndarray, alpha_bar: float):
    """grad_x log p_t(x_t); x_t is (d,) or (n, d)."""
    _require_unit_variance(prior)
    x = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    logr, means_t = _log_resp(prior, x, alpha_bar)
    r = np.exp(logr)
    score = r @ means_t - x
    return score[0] if np.asarray(x_t).ndim == 1 else score


def smoothed_score_hvp(
    prior: GaussianMixture, x_t: np.ndarray, alpha_bar: float, v: np.ndarray
):
    """Hessian-vector product (grad^2 log p_t(x)) v, batched like x_t.

    For unit-variance components:
        H v = sum_k r_k (m_k - x) ((m_k - x) . v) - v - s (s . v),
    with s the smoothed score.
    """
    _require_unit_variance(prior)
    squeeze = np.asarray(x_t).ndim == 1
    x = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    vv = np.atleast_2d(np.asarray(v, dtype=np.float64))
    logr, means_t = _log_resp(prior, x, alpha_bar)
    r = np.exp(logr)
    s = r @ means_t - x
    out = -vv - s * np.einsum("nd,nd->n", s, vv)[:, None]
    for k in range(prior.n_components):
        diff = means_t[k] - x
        out += (r[:, k] * np.einsum("nd,nd->n", diff, vv))[:, None] * diff
    return out[0] if squeeze else out


def make_tweedie_jacobian_vp(prior: GaussianMixture, alpha_bar: float):
    """Exact d(x0_hat)/d(x_t) applied to a vector, via the analytic Hessian.

    J = (1/sqrt(ab)) (I + (1 - ab) H); the returned callable maps
    (x_t, v) -> J v with the same batching as smoothed_score.
    """

    def jvp(x_t: np.ndarray, v: np.ndarray) -> np.ndarray:
        hv = smoothed_score_hvp(prior, x_t, alpha_bar, v)
        return (v + (1.0 - alpha_bar) * hv) / np.sqrt(alpha_bar)

    return jvp


def conditional_moments(
    prior: GaussianMixture, x_t: np.ndarray, alpha_bar: float
) -> ConditionalMoments:
    """Exact E[x0 | x_t] and Cov(x0 | x_t) under the mixture prior."""
    _require_unit_variance(prior)
    x = np.asarray(x_t, dtype=np.float64)
    logr, _ = _log_resp(prior, x[None, :], alpha_bar)
    r = np.exp(logr[0])
    sab = np.sqrt(alpha_bar)
    # per-component posterior: mean U_k + sqrt(ab)(x - sqrt(ab) U_k),
    # covariance (1 - ab) I
    comp_means = prior.means + sab * (x - sab * prior.means)
    mean = r @ comp_means
    d = prior.dim
    cov = (1.0 - alpha_bar) * np.eye(d)
    cov += np.einsum("k,kd,ke->de", r, comp_means, comp_means)
    cov -= np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    return ConditionalMoments(mean=mean, cov=cov)


def exact_posterior(prior: GaussianMixture, meas) -> GaussianMixture:
    """Exact Gaussian-mixture posterior under y = A x0 + N(0, sigma^2 I).

    Shared component covariance Sigma = (I + A^T A / sigma^2)^{-1}, means
    Sigma (A^T y / sigma^2 + U_k), weights re-weighted by
    N(y; A U_k, sigma^2 I + A A^T).
    """
    _require_unit_variance(prior)
    a = np.asarray(meas.a, dtype=np.float64)
    y = np.asarray(meas.y, dtype=np.float64)
    sigma = float(meas.sigma)
    if sigma <= 0:
        raise ValueError("measurement noise sigma must be positive")
    if not np.any(a):
        return prior
    d = prior.dim
    m = a.shape[0]
    cov = np.linalg.inv(np.eye(d) + (a.T @ a) / sigma**2)
    cov = 0.5 * (cov + cov.T)
    means = (np.full((prior.n_components, d), (a.T @ y) / sigma**2) + prior.means) @ cov.T
    weight_cov = sigma**2 * np.eye(m) + a @ a.T
    log_w = np.array(
        [
            lw + gaussian_log_pdf(y, a @ u, weight_cov)
            for lw, u in zip(prior.log_weights, prior.means)
        ]
    )
    return GaussianMixture(
        dim=d, means=means, log_weights=_normalize_log_weights(log_w), cov=cov
    )


def sample_mixture(
    mix: GaussianMixture, n: int, rng_seed: int | np.random.Generator
) -> np.ndarray:
    """n i.i.d. draws from the mixture; deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    w = np.exp(mix.log_weights)
    w = w / w.sum()
    idx = rng.choice(mix.n_components, size=n, p=w)
    z = rng.standard_normal((n, mix.dim))
    if np.isscalar(mix.cov):
        noise = np.sqrt(float(mix.cov)) * z
    else:
        noise = z @ np.linalg.cholesky(mix.cov).T
    return mix.means[idx] + noise
