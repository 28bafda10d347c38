"""Skorohod reflection of dPhi = -dphi between moving barriers.

One-step projection scheme: propagate the unconstrained increment, then clamp
to the barriers evaluated at the right endpoint of the step.  The clamped
amount is booked as cumulative buying (lower barrier) or selling (upper
barrier), so that

    dPhi_k = dPhi_0 - (phi_k - phi_0) + up_k - down_k

holds at every grid point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .paths import InvalidArgument, RngStream, SamplePath, TimeGrid


@dataclass(frozen=True)
class ReflectedSolution:
    dPhi: SamplePath
    up: SamplePath
    down: SamplePath
    coarse_events: int = 0

    @property
    def grid(self) -> TimeGrid:
        return self.dPhi.grid

    @property
    def turnover(self) -> float:
        return float(self.up.values[-1] + self.down.values[-1])


def initial_offset(xS: float, S0: float, phi0: float, dPhiPlus0: float) -> float:
    """Offset after the initial block trade: x^S / S_0 - phi_0 projected on the corridor."""
    if S0 <= 0:
        raise InvalidArgument(f"S0 must be positive, got {S0}")
    return float(min(max(xS / S0 - phi0, -dPhiPlus0), dPhiPlus0))


@njit(cache=True)
def project_path(drive, lower, upper, d0, up0, down0):
    """Reflect ``d0 - (drive - drive[0])`` into [lower, upper].

    Returns (offset, up, down, coarse) where coarse counts steps whose
    overshoot exceeded the corridor width.
    """
    n = drive.shape[0]
    d = np.empty(n)
    up = np.empty(n)
    down = np.empty(n)
    d[0] = d0
    up[0] = up0
    down[0] = down0
    coarse = 0
    for k in range(n - 1):
        x = d[k] - (drive[k + 1] - drive[k])
        lo = lower[k + 1]
        hi = upper[k + 1]
        u = 0.0
        v = 0.0
        if x < lo:
            u = lo - x
            if u > hi - lo:
                coarse += 1
            x = lo
        elif x > hi:
            v = x - hi
            if v > hi - lo:
                coarse += 1
            x = hi
        d[k + 1] = x
        up[k + 1] = up[k] + u
        down[k + 1] = down[k] + v
    return d, up, down, coarse


def solve_skorohod(phi: SamplePath, lower: SamplePath, upper: SamplePath, dPhi0: float) -> ReflectedSolution:
    lo, hi = lower.values, upper.values
    if np.any(lo >= hi):
        raise InvalidArgument("barriers must satisfy lower < upper at every grid point")
    if not lo[0] <= dPhi0 <= hi[0]:
        raise InvalidArgument("initial offset must lie between the barriers")
    d, up, down, coarse = project_path(phi.values, lo, hi, float(dPhi0), 0.0, 0.0)
    g = phi.grid
    return ReflectedSolution(SamplePath(g, d), SamplePath(g, up), SamplePath(g, down), int(coarse))


def reflect_bm(grid: TimeGrid, rng: RngStream, q0: float = 0.0) -> SamplePath:
    """Brownian motion reflected at -1 and 1."""
    dW = rng.normals(grid.n) * np.sqrt(grid.dt)
    # the projection subtracts the driver, so feed -W to reflect +W
    drive = np.concatenate(([0.0], -np.cumsum(dW)))
    ones = np.ones(grid.n + 1)
    q, _, _, _ = project_path(drive, -ones, ones, float(q0), 0.0, 0.0)
    return SamplePath(grid, q)
