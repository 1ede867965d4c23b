"""Linear-beta DDPM schedule, forward noising and the Gaussian forward posterior.

Time is 1-indexed; t = 0 is clean data and alpha_bar_0 = 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta_min: float
    beta_max: float
    betas: np.ndarray  # index t-1 holds beta_t
    alphas: np.ndarray
    alpha_bars: np.ndarray  # length T + 1, alpha_bars[0] = 1
    c0: np.ndarray  # all c arrays have length T + 1, entry 0 unused except c0[0] = 1
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray

    def check_step(self, t: int, lo: int = 1) -> None:
        if not lo <= t <= self.T:
            raise ValueError(f"diffusion step {t} outside [{lo}, {self.T}]")


def build_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> DiffusionSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < beta_min <= beta_max < 1:
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    betas = np.linspace(beta_min, beta_max, T) if T > 1 else np.array([beta_min])
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])

    c0 = np.sqrt(alpha_bars)
    c1 = np.sqrt(1.0 - alpha_bars)
    c2 = np.zeros(T + 1)
    c3 = np.zeros(T + 1)
    c4 = np.zeros(T + 1)
    ab, ab_prev = alpha_bars[1:], alpha_bars[:-1]
    c2[1:] = np.sqrt(ab_prev) * betas / (1.0 - ab)
    c3[1:] = np.sqrt(alphas) * (1.0 - ab_prev) / (1.0 - ab)
    c4[1:] = np.sqrt(betas * (1.0 - ab_prev) / (1.0 - ab))
    return DiffusionSchedule(T, float(beta_min), float(beta_max), betas, alphas, alpha_bars, c0, c1, c2, c3, c4)


def q_sample(schedule: DiffusionSchedule, y0, t, noise):
    """y_t = c0(t) y0 + c1(t) noise. ``t`` may be an int or one step per row."""
    t_arr = np.asarray(t)
    if np.any(t_arr < 1) or np.any(t_arr > schedule.T):
        raise ValueError(f"diffusion step outside [1, {schedule.T}]")
    y0 = np.asarray(y0, dtype=np.float64)
    c0, c1 = schedule.c0[t_arr], schedule.c1[t_arr]
    if t_arr.ndim == 1:
        c0, c1 = c0[:, None], c1[:, None]
    return c0 * y0 + c1 * np.asarray(noise, dtype=np.float64)


def posterior_params(schedule: DiffusionSchedule, y0_hat, y_t, t: int):
    """Mean and std of p(y_{t-1} | ...) with the denoiser's clean estimate plugged
    into the forward posterior. At t = 1 the mean is y0_hat and the std is 0."""
    schedule.check_step(t)
    mu = schedule.c2[t] * np.asarray(y0_hat, dtype=np.float64) + schedule.c3[t] * np.asarray(y_t, dtype=np.float64)
    return mu, float(schedule.c4[t])


def posterior_sample(mu, sigma: float, noise, final: bool = False):
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if final or sigma == 0.0:
        return np.array(mu, dtype=np.float64, copy=True)
    return mu + sigma * np.asarray(noise, dtype=np.float64)
