"""Interaction energy diagnostics.

For symmetric coupling c and trigonometric interaction the dynamics admit

    E(theta) = -1/2 * sum_ij c_ij sin(theta_i) sin(theta_j),

whose gradient is (grad E)_i = -cos(theta_i) * sum_j c_ij sin(theta_j), so
the pulse-coupled rhs with zero intrinsic rates is exactly -grad E and the
discrete step is gradient descent with step gamma. Along the continuous
flow dtheta/dt = omega - gamma * grad E,

    dE/dt = <grad E, omega> - gamma * ||grad E||^2,

which is non-increasing only when omega = 0: a constant rate omega_i
contributes the circulation integral of the one-form omega_i d(theta_i)
around its circle, 2*pi*omega_i, so no single-valued potential can absorb
it. Descent is therefore claimed (and checked) only in the zero-rate,
fixed symmetric coupling, trig, ungrouped regime.

Energies for state-dependent (attentive) weights symmetrize the
instantaneous matrix and are diagnostics only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .coupling import DenseCoupling
from .dynamics import TrigFns, discrete_step, winfree_rhs
from .errors import DomainError, ShapeError
from .geometry import wrap
from .rng import stream

__all__ = [
    "check_symmetric", "interaction_energy", "energy_gradient",
    "position_coupling_energy", "EnergyReport", "energy_rate",
    "lyapunov_check", "LyapunovReport", "drift_circulation",
]

SYMMETRY_TOL = 1e-10


def check_symmetric(c: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"coupling matrix must be square, got {c.shape}")
    gap = float(np.max(np.abs(c - c.T))) if c.size else 0.0
    if gap > tol:
        raise DomainError(
            f"coupling matrix is not symmetric (max |c - c^T| = {gap:.3e})"
        )
    return c


def interaction_energy(theta, c) -> float:
    """E = -1/2 sin(theta)^T c sin(theta) for symmetric c."""
    c = check_symmetric(c)
    t = np.asarray(theta, dtype=np.float64).ravel()
    if t.shape[0] != c.shape[0]:
        raise ShapeError(f"{t.shape[0]} phases vs {c.shape[0]}x{c.shape[0]} coupling")
    s = np.sin(t)
    return float(-0.5 * s @ c @ s)


def energy_gradient(theta, c) -> np.ndarray:
    """(grad E)_i = -cos(theta_i) sum_j c_ij sin(theta_j)."""
    c = check_symmetric(c)
    t = np.asarray(theta, dtype=np.float64).ravel()
    if t.shape[0] != c.shape[0]:
        raise ShapeError(f"{t.shape[0]} phases vs {c.shape[0]}x{c.shape[0]} coupling")
    return -np.cos(t) * (c @ np.sin(t))


def position_coupling_energy(theta_field, weights) -> float:
    """Energy of an (H, W, C) field under position-to-position weights.

    The (possibly state-dependent) P x P weight matrix is symmetrized and
    treated as channel-diagonal coupling:
    E = -1/2 sum_ps W_ps <sin theta_p, sin theta_s>. Diagnostic only.
    """
    t = np.asarray(theta_field, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) field, got {t.shape}")
    h, w, c = t.shape
    a = np.asarray(weights, dtype=np.float64)
    if a.shape != (h * w, h * w):
        raise ShapeError(f"weights {a.shape} do not match {h * w} positions")
    sym = (a + a.T) / 2.0
    s = np.sin(t).reshape(h * w, c)
    return float(-0.5 * np.einsum("ps,pc,sc->", sym, s, s))


@dataclass
class EnergyReport:
    """Energy snapshot with the predicted instantaneous rate of change.

    predicted_rate = drift_term - gamma * grad_norm_sq holds exactly: the
    field is stored as that expression, never recomputed elsewhere.
    """

    energy: float
    grad_norm_sq: float
    drift_term: float
    predicted_rate: float

    def to_json(self) -> str:
        return json.dumps({
            "energy": self.energy,
            "grad_norm_sq": self.grad_norm_sq,
            "drift_term": self.drift_term,
            "predicted_rate": self.predicted_rate,
        })


def energy_rate(theta, omega, c, gamma: float) -> EnergyReport:
    """Report E, <grad E, omega>, ||grad E||^2 and the rate
    dE/dt = <grad E, omega> - gamma ||grad E||^2 along
    dtheta/dt = omega - gamma grad E."""
    g = energy_gradient(theta, c)
    om = np.broadcast_to(np.asarray(omega, dtype=np.float64), g.shape)
    drift = float(g @ om)
    gsq = float(g @ g)
    return EnergyReport(
        energy=interaction_energy(theta, c),
        grad_norm_sq=gsq,
        drift_term=drift,
        predicted_rate=drift - gamma * gsq,
    )


@dataclass
class LyapunovReport:
    """Descent statistics over repeated zero-rate rollouts."""

    seeds: list
    e_start: list
    e_end: list
    max_step_increase: float

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_step_increase <= tol and all(
            e1 < e0 for e0, e1 in zip(self.e_start, self.e_end)
        )

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "e_start": self.e_start,
            "e_end": self.e_end,
            "max_step_increase": self.max_step_increase,
        }


def lyapunov_check(c, *, gamma: float = 0.01, steps: int = 1000,
                   seeds=range(20)) -> LyapunovReport:
    """Iterate the zero-rate trig step from random starts and track E.

    Valid regime only: symmetric fixed c, trig interaction, no grouping.
    The discrete step is plain gradient descent on E, so for small gamma
    the energy sequence must be non-increasing up to the O(gamma^2)
    discretization term.
    """
    c = check_symmetric(c)
    d = c.shape[0]
    fns = TrigFns()
    coupling = DenseCoupling(c)
    seeds = list(seeds)
    e_start, e_end, worst = [], [], -np.inf
    for seed in seeds:
        theta = stream("lyapunov/theta0", seed).uniform(-np.pi, np.pi, d)
        e_prev = interaction_energy(theta, c)
        e_start.append(e_prev)
        for _ in range(steps):
            rhs = winfree_rhs(theta, np.zeros(d), fns, coupling)
            theta = discrete_step(theta, rhs, gamma)
            e = interaction_energy(theta, c)
            worst = max(worst, e - e_prev)
            e_prev = e
        e_end.append(e_prev)
    return LyapunovReport(seeds, e_start, e_end, float(worst))


def drift_circulation(omega_i: float, loop_steps: int = 4096) -> float:
    """Circulation of the drift one-form omega_i d(theta) around the circle.

    Midpoint quadrature of the constant rate over one fundamental cycle of
    the phase; equals 2*pi*omega_i regardless of coupling, which is the
    obstruction to absorbing intrinsic rates into any potential.
    """
    if loop_steps < 1:
        raise DomainError(f"loop_steps must be >= 1, got {loop_steps}")
    dtheta = 2.0 * np.pi / loop_steps
    midpoints = wrap(-np.pi + dtheta * (np.arange(loop_steps) + 0.5))
    integrand = np.full_like(midpoints, float(omega_i))
    return float(np.sum(integrand * dtheta))
