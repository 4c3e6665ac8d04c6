"""Error-norm tables, convergence-order studies and solver diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .integrators import (AdaptiveSettings, TimeGrid, Trajectory,
                          integrate_dp45, integrate_fixed)
from .model import ModelParams, hamiltonian, rhs_normalized
from .sweep import SweepResult

VARIABLES = ("S", "I", "C", "A")

# Norms 1, 2 and infinity of the per-variable difference between GNU
# Octave's ode45 output and each fixed-step method, as published for the
# default scenario: default parameters, start (0.6, 0.2, 0.1, 0.1),
# 100 steps on [0, 20].  The fourth-order row mostly reflects the
# baseline solver's own sampling error rather than method error.
OCTAVE_ODE45_BASELINE = {
    "euler": {
        "S": (0.4495660, 0.0659270, 0.0161175),
        "I": (0.1646710, 0.0301720, 0.0113068),
        "C": (0.5255950, 0.0783920, 0.0190621),
        "A": (0.0443340, 0.0101360, 0.0041673),
    },
    "rk2": {
        "S": (0.0106530, 0.0014868, 0.0003341),
        "I": (0.0105505, 0.0025288, 0.0009613),
        "C": (0.0151705, 0.0022508, 0.0006695),
        "A": (0.0044304, 0.0011695, 0.0004678),
    },
    "rk4": {
        "S": (0.0003193, 0.0000409, 0.0000107),
        "I": (0.0002733, 0.0000395, 0.0000140),
        "C": (0.0004841, 0.0000674, 0.0000186),
        "A": (0.0000579, 0.0000098, 0.0000042),
    },
}

ORDER_BANDS = {"euler": (0.9, 1.1), "rk2": (1.8, 2.2), "rk4": (3.5, 4.5)}


@dataclass(frozen=True)
class NormTriple:
    """Vector norms 1, 2 and infinity of one difference vector."""

    n1: float
    n2: float
    ninf: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.n1, self.n2, self.ninf)


@dataclass
class NormTable:
    method: str
    grid: TimeGrid
    per_variable: dict[str, NormTriple]


@dataclass
class OrderStudy:
    method: str
    refinements: tuple[int, ...]
    step_sizes: tuple[float, ...]
    terminal_errors: tuple[float, ...]      # max over components at tf
    slope: float                            # least-squares fit on the above
    per_variable_slopes: dict[str, float]


def diff_norms(x: np.ndarray, y: np.ndarray) -> NormTriple:
    """Norms of x - y over the grid nodes of one variable."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return NormTriple(float(np.abs(d).sum()),
                      float(math.sqrt(float((d * d).sum()))),
                      float(np.abs(d).max()))


def reference_trajectory(params: ModelParams, x0: np.ndarray, grid: TimeGrid,
                         settings: AdaptiveSettings | None = None) -> Trajectory:
    """Adaptive 5(4) run of the fraction dynamics sampled on ``grid``."""
    settings = settings or AdaptiveSettings()
    return integrate_dp45(lambda t, x: rhs_normalized(params, x),
                          grid.t0, grid.tf, x0, settings, grid)


def build_norm_table(method: str, params: ModelParams, x0: np.ndarray,
                     grid: TimeGrid | None = None,
                     settings: AdaptiveSettings | None = None,
                     reference: Trajectory | None = None) -> NormTable:
    """Per-variable difference norms of one fixed-step method vs the reference.

    Norms run over all grid nodes including t0, where the difference is
    zero by construction.
    """
    grid = grid or TimeGrid(0.0, 20.0, 100)
    if reference is None:
        reference = reference_trajectory(params, x0, grid, settings)
    traj = integrate_fixed(method, lambda t, x: rhs_normalized(params, x), grid, x0)
    per_var = {
        var: diff_norms(traj.states[:, k], reference.states[:, k])
        for k, var in enumerate(VARIABLES)
    }
    return NormTable(method=method, grid=grid, per_variable=per_var)


def convergence_order(method: str, params: ModelParams, x0: np.ndarray,
                      refinements: Sequence[int] = (100, 200, 400, 800),
                      t0: float = 0.0, tf: float = 20.0) -> OrderStudy:
    """Empirical order from terminal errors against a tight adaptive run."""
    if len(refinements) < 3:
        raise ValueError("need at least 3 refinement levels")
    f = lambda t, x: rhs_normalized(params, x)
    tight = AdaptiveSettings(reltol=1e-12, abstol=1e-14)
    ref_end = integrate_dp45(f, t0, tf, x0, tight, TimeGrid(t0, tf, 1)).states[-1]
    hs, errs, comp_errs = [], [], []
    for m in refinements:
        grid = TimeGrid(t0, tf, int(m))
        end = integrate_fixed(method, f, grid, x0).states[-1]
        hs.append(grid.h)
        comp = np.abs(end - ref_end)
        comp_errs.append(comp)
        errs.append(float(comp.max()))
    log_h = np.log(hs)
    slope = float(np.polyfit(log_h, np.log(errs), 1)[0])
    per_var = {
        var: float(np.polyfit(log_h, np.log([c[k] for c in comp_errs]), 1)[0])
        for k, var in enumerate(VARIABLES)
    }
    return OrderStudy(method=method, refinements=tuple(int(m) for m in refinements),
                      step_sizes=tuple(hs), terminal_errors=tuple(errs),
                      slope=slope, per_variable_slopes=per_var)


def simplex_drift(traj: Trajectory) -> float:
    """Largest deviation of s+i+c+a from one over the trajectory nodes."""
    return float(np.abs(traj.states.sum(axis=1) - 1.0).max())


def stationarity_residual(result: SweepResult, p: ModelParams,
                          fd_step: float = 1e-6) -> float | None:
    """Largest |dH/du| at nodes where the control is strictly interior.

    Central finite difference of the Hamiltonian in u.  Returns None
    when the control touches a bound at every node.
    """
    u_max = result.bounds.u_max
    worst = None
    for k in range(result.states.grid.node_count):
        u = float(result.control[k])
        if not 0.0 < u < u_max:
            continue
        x = result.states.states[k]
        lam = result.adjoints.states[k]
        grad = (hamiltonian(p, x, lam, u + fd_step)
                - hamiltonian(p, x, lam, u - fd_step)) / (2.0 * fd_step)
        worst = abs(grad) if worst is None else max(worst, abs(grad))
    return worst
