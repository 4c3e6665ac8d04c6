"""Initial-value-problem integrators for vector ODE systems.

Fixed-step Euler, Heun (RK2) and classical RK4 steppers, a driver that
walks them across a uniform time grid, and an adaptive embedded
Dormand-Prince 5(4) integrator whose output is sampled on a requested
grid.  All routines are pure functions of their arguments and are safe
to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

VectorField = Callable[[float, np.ndarray], np.ndarray]


class IntegrationFailure(RuntimeError):
    """A state or stage value became non-finite during integration."""

    def __init__(self, message: str, node: int | None = None, t: float | None = None):
        super().__init__(message)
        self.node = node
        self.t = t


class StepLimitExceeded(RuntimeError):
    """The adaptive integrator hit its step budget before finishing."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``steps + 1`` nodes on [t0, tf].

    Node k sits at ``t0 + k * h`` with ``h = (tf - t0) / steps``; the
    final node therefore matches ``tf`` only up to one rounding unit.
    """

    t0: float
    tf: float
    steps: int

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"grid requires tf > t0, got [{self.t0}, {self.tf}]")
        if self.steps < 1:
            raise ValueError(f"grid requires at least 1 step, got {self.steps}")

    @property
    def h(self) -> float:
        return (self.tf - self.t0) / self.steps

    @property
    def node_count(self) -> int:
        return self.steps + 1

    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.steps + 1)


@dataclass
class Trajectory:
    """States on the nodes of a time grid, one row per node."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] != self.grid.node_count:
            raise ValueError(
                f"expected {self.grid.node_count} state rows, got shape {self.states.shape}")
        if not np.isfinite(self.states).all():
            raise ValueError("trajectory contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def times(self) -> np.ndarray:
        return self.grid.nodes()


@dataclass
class AdaptiveSettings:
    """Error control for the Dormand-Prince integrator.

    ``initial_step=None`` selects one hundredth of the integration span.
    """

    reltol: float = 1e-6
    abstol: float = 1e-9
    initial_step: float | None = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.reltol <= 0 or self.abstol <= 0:
            raise ValueError("tolerances must be positive")
        if self.initial_step is not None and self.initial_step <= 0:
            raise ValueError("initial step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


def step_euler(f: VectorField, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """One explicit Euler step."""
    out = x + h * f(t, x)
    if not np.isfinite(out).all():
        raise IntegrationFailure(f"non-finite Euler step at t={t}", t=t)
    return out


def step_rk2(f: VectorField, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """One Heun (second-order Runge-Kutta) step."""
    k1 = f(t, x)
    k2 = f(t + h, x + h * k1)
    out = x + (h / 2.0) * (k1 + k2)
    if not np.isfinite(out).all():
        raise IntegrationFailure(f"non-finite RK2 step at t={t}", t=t)
    return out


def step_rk4(f: VectorField, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """One classical four-stage Runge-Kutta step."""
    k1 = f(t, x)
    k2 = f(t + h / 2.0, x + (h / 2.0) * k1)
    k3 = f(t + h / 2.0, x + (h / 2.0) * k2)
    k4 = f(t + h, x + h * k3)
    out = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.isfinite(out).all():
        raise IntegrationFailure(f"non-finite RK4 step at t={t}", t=t)
    return out


STEPPERS = {"euler": step_euler, "rk2": step_rk2, "rk4": step_rk4}

FIXED_METHODS = tuple(STEPPERS)


def integrate_fixed(method: str, f: VectorField, grid: TimeGrid,
                    x0: np.ndarray) -> Trajectory:
    """March a fixed-step method across ``grid`` starting from ``x0``."""
    try:
        step = STEPPERS[method]
    except KeyError:
        raise ValueError(f"unknown fixed-step method {method!r}") from None
    x = np.asarray(x0, dtype=float)
    h = grid.h
    out = np.empty((grid.node_count, x.size))
    out[0] = x
    for k in range(grid.steps):
        try:
            x = step(f, grid.t0 + k * h, x, h)
        except IntegrationFailure as exc:
            raise IntegrationFailure(
                f"{method} produced a non-finite state at node {k + 1}",
                node=k + 1, t=grid.t0 + (k + 1) * h) from exc
        out[k + 1] = x
    return Trajectory(grid, out)


# Dormand-Prince 5(4) tableau.  The last stage row equals the 5th-order
# weights (FSAL, not exploited: all seven stages are evaluated per step).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# b5 - b4: weights of the embedded local error estimate
_DP_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                    -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_SHRINK_LIMIT = 0.2
_GROWTH_LIMIT = 5.0
_ERR_EXPONENT = -0.2  # embedded estimate is O(h^5)


def _dp_step(f: VectorField, t: float, x: np.ndarray, h: float):
    """One trial Dormand-Prince step: next state and per-component error."""
    k = np.empty((7, x.size))
    k[0] = f(t, x)
    for s in range(1, 7):
        xs = x.copy()
        row = _DP_A[s]
        for j in range(s):
            if row[j] != 0.0:
                xs = xs + (h * row[j]) * k[j]
        k[s] = f(t + _DP_C[s] * h, xs)
    x_new = x + h * (_DP_B5 @ k)
    err = h * (_DP_ERR @ k)
    return x_new, err


def integrate_dp45(f: VectorField, t0: float, tf: float, x0: np.ndarray,
                   settings: AdaptiveSettings, sample: TimeGrid) -> Trajectory:
    """Adaptive 5(4) integration of ``f`` on [t0, tf], sampled on ``sample``.

    Accepts a trial step when every component satisfies
    ``|err| <= abstol + reltol * |x|``.  Sample nodes are hit exactly by
    clipping the step size to the next node (no dense-output
    interpolation), so each accepted step never spans a sample node.
    """
    if sample.t0 < t0 or sample.tf > tf:
        raise ValueError("sample grid must lie within the integration span")
    x = np.asarray(x0, dtype=float)
    t = t0
    h = settings.initial_step if settings.initial_step is not None else (tf - t0) / 100.0
    targets = sample.nodes()
    recorded = np.empty((sample.node_count, x.size))
    idx = 0
    if targets[0] == t0:
        recorded[0] = x
        idx = 1
    attempts = 0
    while idx < len(targets):
        target = float(targets[idx])
        clipped = t + h >= target
        h_try = target - t if clipped else h
        attempts += 1
        if attempts > settings.max_steps:
            raise StepLimitExceeded(
                f"exceeded {settings.max_steps} steps at t={t} (reached sample {idx})")
        x_new, err = _dp_step(f, t, x, h_try)
        if not np.isfinite(x_new).all():
            raise IntegrationFailure(f"non-finite adaptive step at t={t}", t=t)
        scale = settings.abstol + settings.reltol * np.maximum(np.abs(x), np.abs(x_new))
        ratio = float(np.max(np.abs(err) / scale))
        factor = _GROWTH_LIMIT if ratio == 0.0 else _SAFETY * ratio ** _ERR_EXPONENT
        factor = min(_GROWTH_LIMIT, max(_SHRINK_LIMIT, factor))
        if ratio <= 1.0:
            x = x_new
            if clipped:
                t = target
                recorded[idx] = x
                idx += 1
                # a clipped step must not shrink the controller's proposal
                h = max(h, h_try * factor)
            else:
                t = t + h_try
                h = h_try * factor
        else:
            h = h_try * factor
    return Trajectory(sample, recorded)
