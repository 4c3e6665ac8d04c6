"""SICA HIV/AIDS transmission model and its optimal-control ingredients.

The model splits a population into susceptible (S), HIV-infected
pre-AIDS (I), chronic under-treatment (C) and AIDS-symptomatic (A)
compartments.  This module holds the epidemiological parameter record,
the dynamics in absolute counts and in population fractions, the
controlled dynamics with a prevention effort u, the running cost and
objective of the control problem, the Hamiltonian, the costate
(adjoint) dynamics and the pointwise optimal-control law.

State vectors are plain length-4 numpy arrays ordered
``(s, i, c, a)`` for fractions, ``(S, I, C, A)`` for absolute counts
and ``(lambda1, ..., lambda4)`` for costates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrators import Trajectory

ADJOINT_MODES = ("derived", "verbatim")


class DegeneratePopulation(ValueError):
    """Total population is zero, so per-capita rates are undefined."""


@dataclass(frozen=True)
class ModelParams:
    """Epidemiological rates, all per year except the dimensionless etas.

    ``b=None`` resolves to the default recruitment rate 2.1 * mu.
    """

    mu: float = 1.0 / 69.54     # natural death rate
    b: float | None = None      # recruitment rate
    beta: float = 1.6           # HIV transmission rate
    eta_c: float = 0.015        # infectiousness modification, chronic class
    eta_a: float = 1.3          # infectiousness modification, AIDS class
    phi: float = 1.0            # treatment rate for I
    rho: float = 0.1            # treatment default rate for I
    alpha: float = 0.33         # AIDS treatment rate
    omega: float = 0.09         # treatment default rate for C
    d: float = 1.0              # AIDS-induced death rate

    def __post_init__(self):
        if self.b is None:
            object.__setattr__(self, "b", 2.1 * self.mu)
        for name in ("mu", "b", "beta", "eta_c", "eta_a", "phi", "rho",
                     "alpha", "omega", "d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"parameter {name} must be positive")
        if self.eta_c > 1.0:
            raise ValueError("eta_c must be <= 1 (treated class is less infectious)")
        if self.eta_a < 1.0:
            raise ValueError("eta_a must be >= 1 (AIDS class is more infectious)")


@dataclass(frozen=True)
class ControlBounds:
    """Admissible prevention efforts, 0 <= u <= u_max with u_max < 1.

    u_max = 0 is allowed as the degenerate no-control instance.
    """

    u_max: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.u_max < 1.0:
            raise ValueError(f"u_max must lie in [0, 1), got {self.u_max}")

    def clamp(self, u: float) -> float:
        return min(max(0.0, u), self.u_max)


def force_of_infection(p: ModelParams, x: np.ndarray) -> float:
    """Per-susceptible infection rate for an absolute state (S, I, C, A)."""
    S, I, C, A = x
    N = S + I + C + A
    if N <= 0.0:
        raise DegeneratePopulation(f"total population must be positive, got {N}")
    return (p.beta / N) * (I + p.eta_c * C + p.eta_a * A)


def rhs_absolute(p: ModelParams, x: np.ndarray) -> np.ndarray:
    """Time derivative of the absolute state (S, I, C, A)."""
    S, I, C, A = x
    lam = force_of_infection(p, x)
    N = S + I + C + A
    return np.array([
        p.b * N - lam * S - p.mu * S,
        lam * S - (p.rho + p.phi + p.mu) * I + p.alpha * A + p.omega * C,
        p.phi * I - (p.omega + p.mu) * C,
        p.rho * I - (p.alpha + p.mu + p.d) * A,
    ])


def rhs_normalized(p: ModelParams, x: np.ndarray) -> np.ndarray:
    """Time derivative of the fraction state (s, i, c, a).

    On the simplex s+i+c+a = 1 the four components sum to zero, so the
    dynamics preserve the simplex identically.
    """
    s, i, c, a = x
    aux1 = p.beta * (i + p.eta_c * c + p.eta_a * a) * s
    aux2 = p.d * a
    return np.array([
        p.b * (1.0 - s) - aux1 + aux2 * s,
        aux1 - (p.rho + p.phi + p.b - aux2) * i + p.alpha * a + p.omega * c,
        p.phi * i - (p.omega + p.b - aux2) * c,
        p.rho * i - (p.alpha + p.b + p.d - aux2) * a,
    ])


def rhs_controlled(p: ModelParams, x: np.ndarray, u: float) -> np.ndarray:
    """Fraction dynamics with prevention effort u scaling the infection term.

    At u = 0 the arithmetic reduces bit-for-bit to ``rhs_normalized``.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"control must lie in [0, 1], got {u}")
    return _rhs_controlled_unchecked(p, x, u)


def _rhs_controlled_unchecked(p: ModelParams, x: np.ndarray, u: float) -> np.ndarray:
    # shared kernel: the Hamiltonian evaluates this for arbitrary real u
    s, i, c, a = x
    aux1 = (1.0 - u) * p.beta * (i + p.eta_c * c + p.eta_a * a) * s
    aux2 = p.d * a
    return np.array([
        p.b * (1.0 - s) - aux1 + aux2 * s,
        aux1 - (p.rho + p.phi + p.b - aux2) * i + p.alpha * a + p.omega * c,
        p.phi * i - (p.omega + p.b - aux2) * c,
        p.rho * i - (p.alpha + p.b + p.d - aux2) * a,
    ])


def running_cost(x: np.ndarray, u: float) -> float:
    """Integrand s - i - u^2 of the maximized objective."""
    return x[0] - x[1] - u * u


def objective(traj: Trajectory, u: np.ndarray) -> float:
    """Composite-trapezoid value of the running cost along a trajectory."""
    u = np.asarray(u, dtype=float)
    if u.shape != (traj.grid.node_count,):
        raise ValueError(
            f"control vector has {u.shape} entries for a "
            f"{traj.grid.node_count}-node grid")
    cost = traj.states[:, 0] - traj.states[:, 1] - u * u
    return float(np.trapezoid(cost, dx=traj.grid.h))


def hamiltonian(p: ModelParams, x: np.ndarray, lam: np.ndarray, u: float) -> float:
    """Running cost plus inner product of the costate with the dynamics.

    Defined for any real u; the quadratic cost makes it strictly concave
    in the control.
    """
    return float(running_cost(x, u) + np.dot(lam, _rhs_controlled_unchecked(p, x, u)))


def adjoint_rhs(p: ModelParams, x: np.ndarray, lam: np.ndarray, u: float,
                mode: str = "derived") -> np.ndarray:
    """Time derivative of the costate vector.

    mode "derived" is the analytic negative Hamiltonian gradient,
    lambda' = -dH/dx, and is the default.  mode "verbatim" reproduces
    the reference GNU Octave routine for this problem, which carries the
    opposite sign on the d*s coupling inside the lambda1 factor of the
    fourth equation; it fails a finite-difference gradient check there
    and exists for comparison runs only.
    """
    if mode not in ADJOINT_MODES:
        raise ValueError(f"unknown adjoint mode {mode!r}")
    s, i, c, a = x
    l1, l2, l3, l4 = lam
    uc = 1.0 - u
    forc = uc * p.beta * (i + p.eta_c * c + p.eta_a * a)
    da = p.d * a
    dl1 = -1.0 + l1 * (p.b + forc - da) - l2 * forc
    g = uc * p.beta * s
    dl2 = (1.0 + l1 * g - l2 * (g - (p.rho + p.phi + p.b) + da)
           - l3 * p.phi - l4 * p.rho)
    gc = uc * p.beta * p.eta_c * s
    dl3 = l1 * gc - l2 * (gc + p.omega) + l3 * (p.omega + p.b - da)
    ga = uc * p.beta * p.eta_a * s
    ds = p.d * s if mode == "verbatim" else -(p.d * s)
    dl4 = (l1 * (ga + ds) - l2 * (ga + p.alpha + p.d * i)
           - l3 * p.d * c + l4 * (p.alpha + p.b + p.d - 2.0 * da))
    return np.array([dl1, dl2, dl3, dl4])


def optimal_control_law(p: ModelParams, x: np.ndarray, lam: np.ndarray,
                        bounds: ControlBounds) -> float:
    """Pointwise maximizer of the Hamiltonian over the admissible controls.

    The Hamiltonian is a concave parabola in u, so the maximizer is the
    stationary point clamped into [0, u_max].
    """
    s, i, c, a = x
    raw = p.beta * (i + p.eta_c * c + p.eta_a * a) * s * (lam[0] - lam[1]) / 2.0
    return bounds.clamp(raw)
