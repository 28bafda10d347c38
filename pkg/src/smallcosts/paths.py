"""Time grids, seeded Brownian drivers, Euler-Maruyama integration and
realized (co)variation estimates.

Every simulated object lives on a uniform :class:`TimeGrid`.  Values are
stored per grid point (``n + 1`` entries); coefficient tracks are stored per
interval (``n`` entries) and are evaluated at the left endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidArgument(ValueError):
    """Raised when an operation receives arguments violating its contract."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise InvalidArgument(f"horizon T must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgument(f"number of steps n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n + 1) * self.dt
        t[-1] = self.T
        return t

    def index_of(self, t: float) -> int:
        """Nearest grid index of time ``t``."""
        return int(round(t / self.dt))


def make_grid(T: float, n: int) -> TimeGrid:
    return TimeGrid(float(T), n)


@dataclass(frozen=True)
class SamplePath:
    """A process sampled on a grid, optionally with its Ito coefficients.

    ``drift`` and ``diffusion`` hold one value per interval, so that
    ``X[k+1] - X[k] ~ drift[k] * dt + diffusion[k] * dW[k]``.
    """

    grid: TimeGrid
    values: np.ndarray
    drift: np.ndarray | None = None
    diffusion: np.ndarray | None = None

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n + 1,):
            raise InvalidArgument(
                f"values must have length n+1={self.grid.n + 1}, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)
        for name in ("drift", "diffusion"):
            track = getattr(self, name)
            if track is None:
                continue
            track = _frozen(np.broadcast_to(track, (self.grid.n,)) if np.ndim(track) == 0 else track)
            if track.shape != (self.grid.n,):
                raise InvalidArgument(f"{name} track must have length n={self.grid.n}")
            object.__setattr__(self, name, track)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, index)``.

    Path ``index`` always sees the same numbers no matter how many other
    paths are simulated or in which order.
    """

    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=(int(self.index),))
        return np.random.Generator(np.random.Philox(ss))

    def normals(self, *shape: int) -> np.ndarray:
        return self.generator().standard_normal(shape)


def simulate_bm(grid: TimeGrid, rng: RngStream) -> SamplePath:
    """Standard Brownian motion on ``grid``; W_0 = 0."""
    dW = rng.normals(grid.n) * np.sqrt(grid.dt)
    return SamplePath(grid, np.concatenate(([0.0], np.cumsum(dW))))


def integrate_ito(drift, diffusion, driver: SamplePath, x0: float) -> SamplePath:
    """Euler-Maruyama for dX = drift dt + diffusion dW with left-point coefficients.

    ``drift`` and ``diffusion`` are per-interval arrays (or scalars) and the
    Brownian increments are taken from ``driver``.
    """
    grid = driver.grid
    n = grid.n
    b = np.broadcast_to(np.asarray(drift, dtype=float), (n,)) if np.ndim(drift) == 0 else np.asarray(drift, float)
    c = (
        np.broadcast_to(np.asarray(diffusion, dtype=float), (n,))
        if np.ndim(diffusion) == 0
        else np.asarray(diffusion, float)
    )
    if b.shape != (n,) or c.shape != (n,):
        raise InvalidArgument(
            f"coefficient arrays must have length n={n}, got {b.shape} and {c.shape}"
        )
    steps = b * grid.dt + c * driver.increments
    values = np.concatenate(([float(x0)], float(x0) + np.cumsum(steps)))
    return SamplePath(grid, values, drift=b, diffusion=c)


def realized_cov(X: SamplePath, Y: SamplePath, window: int = 1) -> SamplePath:
    """Rolling estimate of the local covariation rate d[X, Y]/dt.

    The value at grid point k is the sum of increment products over the
    ``window`` intervals ending at k, divided by their total length.  Point 0
    copies point 1.
    """
    if X.grid != Y.grid:
        raise InvalidArgument("realized_cov requires paths on the same grid")
    if window < 1:
        raise InvalidArgument(f"window must be >= 1, got {window}")
    n, dt = X.grid.n, X.grid.dt
    prod = X.increments * Y.increments
    csum = np.concatenate(([0.0], np.cumsum(prod)))
    k = np.arange(1, n + 1)
    start = np.maximum(0, k - window)
    est = (csum[k] - csum[start]) / ((k - start) * dt)
    return SamplePath(X.grid, np.concatenate(([est[0]], est)))
