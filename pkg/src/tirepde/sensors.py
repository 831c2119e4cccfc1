"""Sampled, noisy yaw-rate and lateral-acceleration sensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SensorSpec:
    """Per-channel white-noise std (rad/s, m/s^2), sample period (s) and seed."""

    std: tuple = (0.01, 0.5)
    period: tuple = (0.005, 0.01)
    seed: int = 0

    def __post_init__(self) -> None:
        std = tuple(float(x) for x in self.std)
        period = tuple(float(x) for x in self.period)
        if len(std) != 2 or len(period) != 2:
            raise ValueError("std and period need one entry per channel")
        if any(not np.isfinite(x) or x < 0 for x in std):
            raise ValueError(f"noise std must be finite and >= 0, got {std}")
        if any(not np.isfinite(x) or x <= 0 for x in period):
            raise ValueError(f"sample period must be > 0, got {period}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "period", period)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def ideal(cls, seed: int = 0) -> "SensorSpec":
        """Noise-free sensors sampled every simulation step (set ``period`` at use)."""
        return cls(std=(0.0, 0.0), period=(1e-300, 1e-300), seed=seed)

    def period_steps(self, dt: float) -> np.ndarray:
        """Sample periods in simulation steps; must be integer multiples of ``dt``."""
        out = []
        for p in self.period:
            if p <= dt:
                out.append(1)
                continue
            k = round(p / dt)
            if abs(k * dt - p) > 1e-9 * p:
                raise ValueError(f"sample period {p:g} s is not a multiple of dt={dt:g} s")
            out.append(int(k))
        return np.array(out, dtype=np.int64)

    def draw(self, n_samples) -> np.ndarray:
        """Gaussian draws, one independent counter-based stream per channel.

        Returns shape ``(2, max(n_samples))``; channel ``c`` uses the first
        ``n_samples[c]`` entries.
        """
        n_samples = np.broadcast_to(np.asarray(n_samples, dtype=np.int64), (2,))
        out = np.zeros((2, int(n_samples.max())))
        children = np.random.SeedSequence(self.seed).spawn(2)
        for c in range(2):
            gen = np.random.Generator(np.random.Philox(children[c]))
            out[c, : n_samples[c]] = self.std[c] * gen.standard_normal(int(n_samples[c]))
        return out

    def describe(self) -> str:
        return (f"std=({self.std[0]:g}, {self.std[1]:g}) period=({self.period[0]:g}, "
                f"{self.period[1]:g}) seed={self.seed}")


def sample_and_corrupt(clean: np.ndarray, spec: SensorSpec, dt: float) -> np.ndarray:
    """Zero-order-hold sampling plus additive noise of a clean output stream.

    ``clean`` has shape ``(n, 2)`` at the simulation rate ``dt``. Channel ``c``
    is sampled at every multiple of its period (starting at index 0) and held
    in between.
    """
    clean = np.asarray(clean, dtype=float)
    n = clean.shape[0]
    steps = spec.period_steps(dt)
    n_samples = (n - 1) // steps + 1
    noise = spec.draw(n_samples)
    out = np.empty_like(clean)
    for c in range(2):
        idx = np.arange(n) // steps[c]
        sampled = clean[:: steps[c], c] + noise[c, : n_samples[c]]
        out[:, c] = sampled[idx]
    return out
