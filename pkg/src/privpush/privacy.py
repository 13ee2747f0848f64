"""Gaussian-mechanism calibration, gradient clipping, and noise draws.

The per-node noise variance is calibrated once for a whole run of T
iterations against an (epsilon, delta) target, assuming per-sample
gradients are clipped to norm G and each node holds J samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class PrivacyError(ValueError):
    """Invalid privacy parameters."""


@dataclass(frozen=True)
class PrivacySpec:
    """Privacy target plus the run shape the calibration depends on."""

    epsilon: float
    delta: float
    G: float
    J: int
    T: int
    d: int
    c1: float = 1.0
    c2: float = 1.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.delta < 1.0):
            raise PrivacyError(f"delta must lie in (0, 1), got {self.delta}")
        if self.epsilon <= 0.0:
            raise PrivacyError(f"epsilon must be positive, got {self.epsilon}")
        if self.G <= 0.0:
            raise PrivacyError(f"clip bound G must be positive, got {self.G}")
        if self.J < 1:
            raise PrivacyError(f"local sample count J must be >= 1, got {self.J}")
        if self.T < 1:
            raise PrivacyError(f"iteration count T must be >= 1, got {self.T}")
        if self.d < 1:
            raise PrivacyError(f"dimension d must be >= 1, got {self.d}")
        if self.c1 <= 0.0 or self.c2 <= 0.0:
            raise PrivacyError("constants c1, c2 must be positive")


def sigma_sq(spec: PrivacySpec) -> float:
    """Per-coordinate Gaussian variance: T c2^2 G^2 ln(1/delta) / (J^2 eps^2)."""
    return (
        spec.T * spec.c2**2 * spec.G**2 * math.log(1.0 / spec.delta)
        / (spec.J**2 * spec.epsilon**2)
    )


def effective_sigma_sq(spec: PrivacySpec | None) -> float:
    """Variance actually injected; 0 when noise is disabled (non-private run)."""
    if spec is None or not spec.enabled:
        return 0.0
    return sigma_sq(spec)


@dataclass(frozen=True)
class BudgetCheck:
    ok: bool
    bound: float
    reason: str


def check_budget_admissible(spec: PrivacySpec) -> BudgetCheck:
    """The calibration regime needs epsilon < c1 T / J^2; warn outside it."""
    bound = spec.c1 * spec.T / spec.J**2
    if spec.epsilon >= bound:
        return BudgetCheck(
            ok=False,
            bound=bound,
            reason=(
                f"epsilon={spec.epsilon:g} is outside the calibrated regime "
                f"(requires epsilon < c1*T/J^2 = {bound:g}); proceeding, but the "
                "privacy guarantee shape does not apply"
            ),
        )
    return BudgetCheck(ok=True, bound=bound, reason="")


def clip_gradient(g: np.ndarray, G: float) -> np.ndarray:
    """Rescale g to norm at most G, leaving direction unchanged.

    The returned norm is guaranteed <= G even after float rounding, which
    makes a second application a bitwise no-op.
    """
    if G <= 0.0:
        raise PrivacyError(f"clip bound G must be positive, got {G}")
    norm = float(np.linalg.norm(g))
    if norm <= G:
        return g.copy()
    scale = G / norm
    clipped = g * scale
    # Rounding can leave the norm a few ulps above G; nudge the scale down.
    while float(np.linalg.norm(clipped)) > G:
        scale = math.nextafter(scale, 0.0)
        clipped = g * scale
    return clipped


def draw_noise(sig_sq: float, d: int, rng: np.random.Generator) -> np.ndarray:
    """N(0, sig_sq I_d) sample; sig_sq = 0 short-circuits without rng draws."""
    if sig_sq < 0.0:
        raise PrivacyError(f"variance must be non-negative, got {sig_sq}")
    if sig_sq == 0.0:
        return np.zeros(d)
    return rng.normal(0.0, math.sqrt(sig_sq), d)
