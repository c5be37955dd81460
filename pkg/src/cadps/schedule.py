"""Discrete variance-preserving diffusion noise schedule.

All samplers and the Gaussian-mixture smoothing formulas share one
schedule object.  Step indices are 1-based: t runs from 1 (least noisy)
to n_steps (near-pure noise).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["NoiseSchedule", "build_linear_vp_schedule", "snr_sigma_sq"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise tables for an N-step reverse diffusion.

    beta[i], alpha[i] = 1 - beta[i], and alpha_bar[i] (running product)
    are stored 0-based internally; use the accessors with 1-based t.
    sigma_tilde holds the ancestral-step noise scales, with
    sigma_tilde[0] = 0 so the final step is deterministic.
    """

    n_steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma_tilde: np.ndarray

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.n_steps:
            raise IndexError(f"step index {t} outside [1, {self.n_steps}]")

    def beta_t(self, t: int) -> float:
        self._check_t(t)
        return float(self.beta[t - 1])

    def alpha_t(self, t: int) -> float:
        self._check_t(t)
        return float(self.alpha[t - 1])

    def alpha_bar_t(self, t: int) -> float:
        self._check_t(t)
        return float(self.alpha_bar[t - 1])

    def alpha_bar_prev(self, t: int) -> float:
        """alpha_bar at step t-1, with the convention alpha_bar[0] = 1."""
        self._check_t(t)
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])

    def sigma_tilde_t(self, t: int) -> float:
        self._check_t(t)
        return float(self.sigma_tilde[t - 1])


def build_linear_vp_schedule(
    n_steps: int, beta_min: float, beta_max: float
) -> NoiseSchedule:
    """Build the linear VP schedule beta_i = min(beta(i/N)/N, 0.999).

    The 0.999 cap keeps alpha_i > 0 so alpha_bar never degenerates to
    exactly zero.
    """
    if n_steps < 2:
        raise ValueError(f"n_steps must be >= 2, got {n_steps}")
    if not (0.0 < beta_min <= beta_max):
        raise ValueError(
            f"need 0 < beta_min <= beta_max, got ({beta_min}, {beta_max})"
        )
    i = np.arange(1, n_steps + 1, dtype=np.float64)
    beta = np.minimum(
        (beta_min + (i / n_steps) * (beta_max - beta_min)) / n_steps, 0.999
    )
    alpha = 1.0 - beta
    # heavily capped schedules (small N with large beta_max) underflow the
    # running product to exactly 0; floor it so 1/sqrt(alpha_bar) stays finite
    alpha_bar = np.maximum(np.cumprod(alpha), 1e-250)
    alpha_bar_prev = np.concatenate(([1.0], alpha_bar[:-1]))
    # DDPM posterior-variance choice; the first entry is forced to zero so
    # the returned x0 is the guided posterior mean.
    sigma_tilde = np.sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar))
    sigma_tilde[0] = 0.0
    return NoiseSchedule(
        n_steps=n_steps,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        sigma_tilde=sigma_tilde,
    )


def snr_sigma_sq(schedule: NoiseSchedule, t: int) -> float:
    """sigma_t^2 = (1 - alpha_bar_t) / alpha_bar_t.

    This is the variance consumed by the r_t^2 = sigma_t^2/(1+sigma_t^2)
    heuristic, so r_t^2 reduces to 1 - alpha_bar_t.
    """
    ab = schedule.alpha_bar_t(t)
    return (1.0 - ab) / ab
