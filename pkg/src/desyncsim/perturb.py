"""Deterministic perturbations: injected idle periods and execution noise.

All random draws are counter-based: the value for (seed, rank, step) is a
pure function of those three numbers, so event processing order and thread
counts can never change them and reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .fileformat import ConfigError

__all__ = [
    "NOISE_KINDS",
    "NoiseModel",
    "Injection",
    "uniform_draws",
    "noise_factors",
    "noise_delays",
    "perturb_duration",
    "injection_map",
]

NOISE_KINDS = ("off", "lognormal_multiplicative", "exponential_additive")

# Smallest uniform fed to the inverse normal CDF; keeps ndtri finite.
_U_FLOOR = 2.0 ** -54


@dataclass(frozen=True)
class NoiseModel:
    """Per-step noise on the work phase.

    lognormal_multiplicative scales the step's work by exp(magnitude*z)
    with z standard normal; exponential_additive prepends a non-working
    delay drawn from Exp(mean=magnitude) seconds.

    onset_step/duration_steps restrict noise to a step window; the draw for
    a given (seed, rank, step) is the same whether or not the window covers
    it, so narrowing the window never reshuffles the surviving values.
    """

    kind: str = "off"
    magnitude: float = 0.0
    seed: int = 1
    onset_step: int = 0
    duration_steps: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.magnitude < 0.0:
            raise ValueError("noise magnitude must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("noise seed must fit in 64 bits")
        if self.onset_step < 0:
            raise ValueError("noise onset_step must be >= 0")
        if self.duration_steps is not None and self.duration_steps < 1:
            raise ValueError("noise duration_steps must be >= 1")

    @property
    def active(self) -> bool:
        return self.kind != "off" and self.magnitude > 0.0

    def covers(self, step: int) -> bool:
        """True when the noise window includes ``step``."""
        if step < self.onset_step:
            return False
        if self.duration_steps is None:
            return True
        return step < self.onset_step + self.duration_steps


@dataclass(frozen=True)
class Injection:
    """One-off extra idle on a given rank, prepended to the given step."""

    rank: int
    step: int
    duration: float  # seconds

    def __post_init__(self) -> None:
        if self.rank < 0:
            raise ValueError("injection rank must be >= 0")
        if self.step < 0:
            raise ValueError("injection step must be >= 0")
        if not self.duration > 0.0:
            raise ValueError("injection duration must be positive")


def uniform_draws(seed: int, rank: int, count: int) -> np.ndarray:
    """First ``count`` uniforms of the (seed, rank) stream; index = step."""
    bitgen = np.random.Philox(key=seed, counter=[0, 0, 0, rank])
    return np.random.Generator(bitgen).random(count)


def _window_mask(model: NoiseModel, steps: int) -> np.ndarray:
    idx = np.arange(steps)
    mask = idx >= model.onset_step
    if model.duration_steps is not None:
        mask &= idx < model.onset_step + model.duration_steps
    return mask


def noise_factors(model: NoiseModel, rank: int, steps: int) -> np.ndarray | None:
    """Multiplicative work factors per step, or None when not applicable."""
    if not (model.active and model.kind == "lognormal_multiplicative"):
        return None
    u = np.maximum(uniform_draws(model.seed, rank, steps), _U_FLOOR)
    return np.where(_window_mask(model, steps), np.exp(model.magnitude * ndtri(u)), 1.0)


def noise_delays(model: NoiseModel, rank: int, steps: int) -> np.ndarray | None:
    """Additive pre-work delays in seconds per step, or None."""
    if not (model.active and model.kind == "exponential_additive"):
        return None
    u = uniform_draws(model.seed, rank, steps)
    return np.where(_window_mask(model, steps), -model.magnitude * np.log1p(-u), 0.0)


def perturb_duration(
    base: float, model: NoiseModel, rank: int, step: int
) -> float:
    """Perturbed duration of one work phase of nominal length ``base``.

    Uses the same per-(seed, rank) stream as the engine, so the value for a
    given step is identical to what a full run applies.
    """
    if not base > 0.0:
        raise ValueError("base duration must be positive")
    if not (model.active and model.covers(step)):
        return base
    u = float(uniform_draws(model.seed, rank, step + 1)[-1])
    if model.kind == "lognormal_multiplicative":
        return base * math.exp(model.magnitude * ndtri(max(u, _U_FLOOR)))
    return base - model.magnitude * math.log1p(-u)


def injection_map(injections: "list[Injection] | tuple[Injection, ...]") -> dict:
    """Index injections by (rank, step); duplicates are a config error."""
    table: dict[tuple[int, int], float] = {}
    for inj in injections:
        key = (inj.rank, inj.step)
        if key in table:
            raise ConfigError(
                f"overlapping injections on rank {inj.rank}, step {inj.step}"
            )
        table[key] = inj.duration
    return table
