"""Forward-backward RK4 sweep for Pontryagin two-point boundary problems.

Each iteration integrates the controlled state forward with a classical
RK4 scheme whose stages interpolate the grid-resident control (endpoint
values at stages 1 and 4, the arithmetic mean at stages 2 and 3), then
integrates the costate backward from its zero transversality data with
the same stage interpolation of states and control, and finally relaxes
the control toward the pointwise law by a convex combination.  The loop
stops once the relative change of all nine tracked vectors (four
states, the control, four costates) falls below the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .integrators import IntegrationFailure, TimeGrid, Trajectory
from .model import (ControlBounds, ModelParams, adjoint_rhs, objective,
                    optimal_control_law, rhs_controlled)


class SweepNonConvergence(RuntimeError):
    """Iteration budget exhausted; carries the last iterate for inspection."""

    def __init__(self, message: str, result: "SweepResult", margin: float):
        super().__init__(message)
        self.result = result
        self.margin = margin


@dataclass
class OcProblem:
    """A control problem in the form the sweep consumes.

    ``control_law`` must return values already clamped to ``bounds``.
    The terminal costate is zero for the free-endpoint problems handled
    here but is kept explicit.
    """

    dim: int
    state_field: Callable[[float, np.ndarray, float], np.ndarray]
    adjoint_field: Callable[[float, np.ndarray, np.ndarray, float], np.ndarray]
    control_law: Callable[[np.ndarray, np.ndarray], float]
    bounds: ControlBounds
    x0: np.ndarray
    terminal_adjoint: np.ndarray

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.terminal_adjoint = np.asarray(self.terminal_adjoint, dtype=float)
        if self.x0.shape != (self.dim,) or self.terminal_adjoint.shape != (self.dim,):
            raise ValueError("state and terminal costate must have the problem dimension")


def sica_problem(params: ModelParams, bounds: ControlBounds, x0: np.ndarray,
                 adjoint_mode: str = "derived") -> OcProblem:
    """Wire the HIV prevention problem into the generic sweep interface."""
    return OcProblem(
        dim=4,
        state_field=lambda t, x, u: rhs_controlled(params, x, u),
        adjoint_field=lambda t, x, lam, u: adjoint_rhs(params, x, lam, u, adjoint_mode),
        control_law=lambda x, lam: optimal_control_law(params, x, lam, bounds),
        bounds=bounds,
        x0=x0,
        terminal_adjoint=np.zeros(4),
    )


@dataclass
class SweepSettings:
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(0.0, 20.0, 1000))
    delta_error: float = 1e-3
    relaxation: float = 0.5
    max_iterations: int = 500
    initial_control: np.ndarray | None = None

    def __post_init__(self):
        if self.delta_error <= 0:
            raise ValueError("delta_error must be positive")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation weight must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.initial_control is not None:
            self.initial_control = np.asarray(self.initial_control, dtype=float)
            if self.initial_control.shape != (self.grid.node_count,):
                raise ValueError("initial control must have one value per grid node")


@dataclass
class SweepResult:
    """Converged (or last) iterate of the sweep.

    ``control`` holds the pointwise control-law evaluation at the final
    state/costate pair, so it satisfies the Hamiltonian maximality
    condition exactly at every node; the relaxed iterate is internal to
    the iteration.  The costate trajectory ends exactly on the terminal
    data.
    """

    states: Trajectory
    adjoints: Trajectory
    control: np.ndarray
    bounds: ControlBounds
    iterations: int
    converged: bool
    objective: float
    final_margin: float


def forward_pass(prob: OcProblem, u: np.ndarray, grid: TimeGrid) -> Trajectory:
    """Integrate the controlled state forward across the grid."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.node_count,):
        raise ValueError("control vector must have one value per grid node")
    h = grid.h
    f = prob.state_field
    out = np.empty((grid.node_count, prob.dim))
    x = prob.x0
    out[0] = x
    for k in range(grid.steps):
        t = grid.t0 + k * h
        um = 0.5 * (u[k] + u[k + 1])
        k1 = f(t, x, u[k])
        k2 = f(t + h / 2.0, x + (h / 2.0) * k1, um)
        k3 = f(t + h / 2.0, x + (h / 2.0) * k2, um)
        k4 = f(t + h, x + h * k3, u[k + 1])
        x = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.isfinite(x).all():
            raise IntegrationFailure(
                f"forward pass produced a non-finite state at node {k + 1}",
                node=k + 1, t=t + h)
        out[k + 1] = x
    return Trajectory(grid, out)


def backward_pass(prob: OcProblem, x: Trajectory, u: np.ndarray) -> Trajectory:
    """Integrate the costate backward from the terminal transversality data.

    Stage values of the state and control at the half node are the
    arithmetic means of the two neighbouring grid nodes.
    """
    u = np.asarray(u, dtype=float)
    grid = x.grid
    if u.shape != (grid.node_count,):
        raise ValueError("control vector must have one value per grid node")
    h = grid.h
    g = prob.adjoint_field
    xs = x.states
    out = np.empty((grid.node_count, prob.dim))
    out[grid.steps] = prob.terminal_adjoint
    lam = prob.terminal_adjoint
    for j in range(grid.steps, 0, -1):
        t = grid.t0 + j * h
        xm = 0.5 * (xs[j] + xs[j - 1])
        um = 0.5 * (u[j] + u[j - 1])
        k1 = g(t, xs[j], lam, u[j])
        k2 = g(t - h / 2.0, xm, lam - (h / 2.0) * k1, um)
        k3 = g(t - h / 2.0, xm, lam - (h / 2.0) * k2, um)
        k4 = g(t - h, xs[j - 1], lam - h * k3, u[j - 1])
        lam = lam - (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.isfinite(lam).all():
            raise IntegrationFailure(
                f"backward pass produced a non-finite costate at node {j - 1}",
                node=j - 1, t=t - h)
        out[j - 1] = lam
    return Trajectory(grid, out)


def update_control(prob: OcProblem, x: Trajectory, lam: Trajectory,
                   u_old: np.ndarray, weight: float) -> np.ndarray:
    """Relaxed control update: weight * clamped law + (1 - weight) * old."""
    u_old = np.asarray(u_old, dtype=float)
    n = x.grid.node_count
    if lam.grid.node_count != n or u_old.shape != (n,):
        raise ValueError("state, costate and control grids must agree")
    law = _law_values(prob, x, lam)
    return weight * law + (1.0 - weight) * u_old


def _law_values(prob: OcProblem, x: Trajectory, lam: Trajectory) -> np.ndarray:
    clamp = prob.bounds.clamp
    return np.array([clamp(prob.control_law(x.states[k], lam.states[k]))
                     for k in range(x.grid.node_count)])


def relative_change_test(tracked: Iterable[tuple[np.ndarray, np.ndarray]],
                         delta: float) -> float:
    """Signed convergence margin, nonnegative once every pair has settled.

    Each pair contributes ``delta * sum|new| - sum|old - new|``; the
    margin is the smallest contribution.
    """
    margin = np.inf
    for old, new in tracked:
        old = np.asarray(old, dtype=float)
        new = np.asarray(new, dtype=float)
        if old.shape != new.shape:
            raise ValueError("tracked vector pair has mismatched lengths")
        margin = min(margin, delta * np.abs(new).sum() - np.abs(old - new).sum())
    return float(margin)


def solve(prob: OcProblem, settings: SweepSettings) -> SweepResult:
    """Run the sweep to convergence and return the extremal.

    Raises SweepNonConvergence with the last iterate attached once the
    iteration budget is exhausted.
    """
    grid = settings.grid
    n = grid.node_count
    if settings.initial_control is not None:
        u = settings.initial_control.copy()
    else:
        u = np.zeros(n)
    # previous-iterate buffers start as the zero arrays the first test runs
    # against, with only the initial state filled in
    states = np.zeros((n, prob.dim))
    states[0] = prob.x0
    adjoints = np.zeros((n, prob.dim))
    x_traj = Trajectory(grid, states)
    lam_traj = Trajectory(grid, adjoints)
    margin = -np.inf
    converged = False
    iterations = 0
    while iterations < settings.max_iterations:
        iterations += 1
        old_states, old_adjoints, old_u = x_traj.states, lam_traj.states, u
        x_traj = forward_pass(prob, u, grid)
        lam_traj = backward_pass(prob, x_traj, u)
        u = update_control(prob, x_traj, lam_traj, u, settings.relaxation)
        pairs = ([(old_states[:, j], x_traj.states[:, j]) for j in range(prob.dim)]
                 + [(old_u, u)]
                 + [(old_adjoints[:, j], lam_traj.states[:, j]) for j in range(prob.dim)])
        margin = relative_change_test(pairs, settings.delta_error)
        if margin >= 0.0:
            converged = True
            break
    control = _law_values(prob, x_traj, lam_traj)
    result = SweepResult(
        states=x_traj,
        adjoints=lam_traj,
        control=control,
        bounds=prob.bounds,
        iterations=iterations,
        converged=converged,
        objective=objective(x_traj, control),
        final_margin=margin,
    )
    if not converged:
        raise SweepNonConvergence(
            f"sweep did not converge within {settings.max_iterations} iterations "
            f"(margin {margin:.3e})", result=result, margin=margin)
    return result
