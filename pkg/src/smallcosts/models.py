"""Market models, their frictionless optimizers and the measure change to the
minimal entropy martingale measure Q.

Two models are provided:

* :class:`BlackScholesModel`, ``dS = S (b dt + sigma dW)``;
* :class:`StochVolModel`, ``dS = S (b(Y) dt + sigma(Y) dW)`` with an
  Ornstein-Uhlenbeck factor ``dY = kappa (mean - Y) dt + xi dB`` driven by a
  Brownian motion B independent of W, and ``b(y) = b0 + b1 tanh(y)``,
  ``sigma(y) = sigma0 + sigma1 tanh(y)``.

Q-expectations are computed from ensembles simulated with a driftless price
(``dS = S sigma dW^Q``).  In the stochastic-volatility model Y keeps its
P-dynamics and every path carries the weight ``exp(-1/2 int (b/sigma)^2 dt)``,
normalized by its ensemble mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import sympy as sp
from scipy.linalg import solve_banded

from .paths import InvalidArgument, RngStream, SamplePath, TimeGrid


@dataclass(frozen=True)
class FrictionParams:
    eps: float
    p: float
    xB: float
    xS: float
    T: float

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise InvalidArgument(f"eps must lie in (0, 1), got {self.eps}")
        if self.p <= 0:
            raise InvalidArgument(f"risk aversion p must be positive, got {self.p}")
        if self.T <= 0:
            raise InvalidArgument(f"horizon T must be positive, got {self.T}")

    @property
    def x(self) -> float:
        """Initial wealth before liquidation."""
        return self.xB + self.xS

    def with_eps(self, eps: float) -> "FrictionParams":
        return replace(self, eps=eps)


@dataclass(frozen=True)
class StateCoeffs:
    """Per-grid-point model quantities consumed by the corridor and dual code.

    ``pi = phi * S`` and ``eta = rho * S**4`` as functions of the factor,
    their factor derivatives (``dpi = d pi / dy`` ...), ``a = p / (3 eta)``
    so that ``alpha = a S**4``, and the factor drift under Q and under the
    simulation measure.  All derivative tracks vanish for Black-Scholes.
    """

    sigma: np.ndarray
    pi: np.ndarray
    dpi: np.ndarray
    d2pi: np.ndarray
    eta: np.ndarray
    a: np.ndarray
    da: np.ndarray
    d2a: np.ndarray
    mu_q: np.ndarray
    mu_p: np.ndarray
    xi: float = 0.0


@dataclass(frozen=True)
class BlackScholesModel:
    b: float
    sigma: float
    S0: float = 1.0

    kind = "black-scholes"

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidArgument(f"sigma must be positive, got {self.sigma}")
        if self.b == 0:
            raise InvalidArgument("b must be nonzero: the activity rate vanishes for b = 0")
        if self.S0 <= 0:
            raise InvalidArgument(f"S0 must be positive, got {self.S0}")

    def market_price_of_risk(self, y=None):
        return self.b / self.sigma

    def state_coeffs(self, p: float, Y=None, times=None, npts: int = 1) -> StateCoeffs:
        pi = self.b / (p * self.sigma**2)
        eta = pi**2
        full = lambda v: np.full(npts, float(v))
        zero = np.zeros(npts)
        return StateCoeffs(
            sigma=full(self.sigma), pi=full(pi), dpi=zero, d2pi=zero, eta=full(eta),
            a=full(p / (3 * eta)), da=zero, d2a=zero, mu_q=zero, mu_p=zero, xi=0.0,
        )


@dataclass(frozen=True)
class StochVolModel:
    b0: float
    b1: float
    sigma0: float
    sigma1: float
    kappa: float = 1.0
    mean: float = 0.0
    xi: float = 0.5
    S0: float = 1.0
    Y0: float = 0.0

    kind = "stoch-vol"

    def __post_init__(self):
        if not self.sigma0 > abs(self.sigma1):
            raise InvalidArgument("need sigma0 > |sigma1| so that sigma(y) stays away from 0")
        if not abs(self.b0) > abs(self.b1):
            raise InvalidArgument("need |b0| > |b1| so that b(y) stays away from 0")
        if self.kappa <= 0 or self.xi < 0:
            raise InvalidArgument("need kappa > 0 and xi >= 0")
        if self.S0 <= 0:
            raise InvalidArgument(f"S0 must be positive, got {self.S0}")

    @property
    def b_bounds(self) -> tuple[float, float]:
        return (self.b0 - abs(self.b1), self.b0 + abs(self.b1))

    @property
    def sigma_bounds(self) -> tuple[float, float]:
        return (self.sigma0 - abs(self.sigma1), self.sigma0 + abs(self.sigma1))

    def b_of(self, y):
        return self.b0 + self.b1 * np.tanh(y)

    def sigma_of(self, y):
        return self.sigma0 + self.sigma1 * np.tanh(y)

    def market_price_of_risk(self, y):
        return self.b_of(y) / self.sigma_of(y)

    @cached_property
    def _jets(self):
        y, p = sp.symbols("y p", real=True)
        b = self.b0 + self.b1 * sp.tanh(y)
        s = self.sigma0 + self.sigma1 * sp.tanh(y)
        pi = b / (p * s**2)
        dpi = sp.diff(pi, y)
        eta = pi**2 + self.xi**2 * dpi**2 / s**2
        a = p / (3 * eta)
        exprs = [s, pi, dpi, sp.diff(pi, y, 2), eta, a, sp.diff(a, y), sp.diff(a, y, 2)]
        return sp.lambdify((y, p), exprs, "numpy")

    def qdrift_table(self, T: float) -> "QDriftTable":
        cache = self.__dict__.setdefault("_qdrift_cache", {})
        if T not in cache:
            cache[T] = QDriftTable.solve(self, T)
        return cache[T]

    def state_coeffs(self, p: float, Y: np.ndarray, times: np.ndarray | None = None) -> StateCoeffs:
        Y = np.asarray(Y, dtype=float)
        vals = [np.broadcast_to(v, Y.shape).astype(float) for v in self._jets(Y, p)]
        mu_p = self.kappa * (self.mean - Y)
        if times is None or self.xi == 0:
            mu_q = mu_p.copy()
        else:
            mu_q = mu_p + self.xi**2 * self.qdrift_table(float(times[-1])).dlogv(times, Y)
        return StateCoeffs(*vals, mu_q=mu_q, mu_p=mu_p, xi=float(self.xi))


@dataclass(frozen=True)
class QDriftTable:
    """Feynman-Kac solution v(t, y) = E[exp(-1/2 int_t^T lambda(Y)^2 ds) | Y_t = y].

    The factor drift under Q is the P-drift plus ``xi**2 * d/dy log v``.
    Solved by Crank-Nicolson with zero-flux boundaries far in the tails.
    """

    t: np.ndarray
    y: np.ndarray
    logv: np.ndarray
    grad: np.ndarray
    T: float = field(default=1.0)

    @classmethod
    def solve(cls, model: StochVolModel, T: float = 1.0, ny: int = 801, nt: int = 400):
        return _solve_feynman_kac(model, T, ny, nt)

    def v0(self, y0: float) -> float:
        return float(np.exp(np.interp(y0, self.y, self.logv[0])))

    def dlogv(self, times: np.ndarray, Y: np.ndarray) -> np.ndarray:
        times = np.asarray(times, float)
        fi = np.clip(times / self.T * (len(self.t) - 1), 0, len(self.t) - 1 - 1e-12)
        i0 = fi.astype(int)
        w = fi - i0
        yi = np.clip((Y - self.y[0]) / (self.y[1] - self.y[0]), 0, len(self.y) - 1 - 1e-12)
        j0 = yi.astype(int)
        u = yi - j0
        g = self.grad
        return (
            (1 - w) * ((1 - u) * g[i0, j0] + u * g[i0, j0 + 1])
            + w * ((1 - u) * g[i0 + 1, j0] + u * g[i0 + 1, j0 + 1])
        )


def _solve_feynman_kac(model: StochVolModel, T: float, ny: int, nt: int) -> QDriftTable:
    k, m, xi = model.kappa, model.mean, model.xi
    spread = 8 * xi / np.sqrt(2 * k) + abs(model.Y0 - m) + 1.0
    y = np.linspace(m - spread, m + spread, ny)
    h = y[1] - y[0]
    dt = T / nt
    lam2 = model.market_price_of_risk(y) ** 2
    mu = k * (m - y)
    # generator L v = mu v' + xi^2/2 v'' - lam^2/2 v, central differences
    lo = xi**2 / (2 * h**2) - mu / (2 * h)
    up = xi**2 / (2 * h**2) + mu / (2 * h)
    di = -(xi**2) / h**2 - lam2 / 2
    # zero-flux: ghost node mirrors the interior neighbour
    up0, lo_end = up[0] + lo[0], lo[-1] + up[-1]
    L_up = np.concatenate(([0.0, up0], up[1:-1]))
    L_lo = np.concatenate((lo[1:-1], [lo_end, 0.0]))
    ab = np.zeros((3, ny))
    ab[0] = -0.5 * dt * L_up
    ab[1] = 1 - 0.5 * dt * di
    ab[2] = -0.5 * dt * L_lo

    def apply_L(v):
        out = di * v
        out[:-1] += np.concatenate(([up0], up[1:-1])) * v[1:]
        out[1:] += np.concatenate((lo[1:-1], [lo_end])) * v[:-1]
        return out

    v = np.ones(ny)
    logv = np.empty((nt + 1, ny))
    logv[nt] = 0.0
    for i in range(nt - 1, -1, -1):
        v = solve_banded((1, 1), ab, v + 0.5 * dt * apply_L(v))
        logv[i] = np.log(v)
    grad = np.gradient(logv, h, axis=1)
    return QDriftTable(t=np.linspace(0, T, nt + 1), y=y, logv=logv, grad=grad, T=T)


Model = BlackScholesModel | StochVolModel


@dataclass(frozen=True)
class ModelPaths:
    """One simulated path with the quantities the corridor code needs.

    ``dW`` are increments of the Q-Brownian motion driving S (or of W under
    P for :func:`simulate_under_P`), ``dB`` those of the factor driver.
    ``qWeight`` is the unnormalized Q-weight ``exp(logWeight)`` until an
    ensemble normalizes it.
    """

    S: SamplePath
    pi: SamplePath
    phi: SamplePath
    eta: SamplePath
    coeffs: StateCoeffs
    dW: np.ndarray
    Y: SamplePath | None = None
    dB: np.ndarray | None = None
    logWeight: float = 0.0
    qWeight: float = 1.0
    measure: str = "Q"

    @property
    def grid(self) -> TimeGrid:
        return self.S.grid

    @property
    def cSS(self) -> np.ndarray:
        """Local quadratic variation of S per grid point."""
        return self.coeffs.sigma**2 * self.S.values**2

    @property
    def cphiphi(self) -> np.ndarray:
        c = self.coeffs
        return (c.pi**2 * c.sigma**2 + c.dpi**2 * c.xi**2) / self.S.values**2

    @property
    def frictionless_gains(self) -> np.ndarray:
        """phi . S_t on the grid (left-point sums)."""
        return np.concatenate(([0.0], np.cumsum(self.phi.values[:-1] * self.S.increments)))


def frictionless_position(model: Model, p: float, y=None):
    """Optimal frictionless stock position pi = b / (p sigma^2) in currency."""
    if isinstance(model, BlackScholesModel):
        return model.b / (p * model.sigma**2)
    y = model.Y0 if y is None else y
    return model.b_of(y) / (p * model.sigma_of(y) ** 2)


def _euler_factor(model: StochVolModel, grid: TimeGrid, dB: np.ndarray) -> np.ndarray:
    Y = np.empty(grid.n + 1)
    Y[0] = model.Y0
    a = 1 - model.kappa * grid.dt
    c = model.kappa * model.mean * grid.dt
    for k in range(grid.n):
        Y[k + 1] = a * Y[k] + c + model.xi * dB[k]
    return Y


def _simulate(model: Model, grid: TimeGrid, rng: RngStream, p: float, measure: str) -> ModelPaths:
    sq = np.sqrt(grid.dt)
    z = rng.generator().standard_normal(grid.n if isinstance(model, BlackScholesModel) else 2 * grid.n)
    dW = z[: grid.n] * sq
    times = grid.times
    if isinstance(model, BlackScholesModel):
        Y = dB = None
        coeffs = model.state_coeffs(p, npts=grid.n + 1)
        lam = np.full(grid.n, model.b / model.sigma)
    else:
        dB = z[grid.n:] * sq
        Yv = _euler_factor(model, grid, dB)
        Y = SamplePath(grid, Yv)
        coeffs = model.state_coeffs(p, Yv, times if measure == "Q" else None)
        lam = model.market_price_of_risk(Yv[:-1])
    sig = coeffs.sigma[:-1]
    growth = 1 + sig * dW
    if measure == "P":
        growth = growth + sig * lam * grid.dt
    S = model.S0 * np.concatenate(([1.0], np.cumprod(growth)))
    pi = coeffs.pi
    logw = -0.5 * float(np.sum(lam**2)) * grid.dt if measure == "Q" else 0.0
    return ModelPaths(
        S=SamplePath(grid, S, diffusion=sig * S[:-1]),
        pi=SamplePath(grid, pi),
        phi=SamplePath(grid, pi / S),
        eta=SamplePath(grid, coeffs.eta),
        coeffs=coeffs,
        dW=dW,
        Y=Y,
        dB=dB,
        logWeight=logw,
        qWeight=float(np.exp(logw)),
        measure=measure,
    )


def simulate_under_Q(model: Model, grid: TimeGrid, rng: RngStream, p: float = 1.0) -> ModelPaths:
    """Simulate one path with S a Q-martingale; the weight is left unnormalized."""
    return _simulate(model, grid, rng, p, "Q")


def simulate_under_P(model: Model, grid: TimeGrid, rng: RngStream, p: float = 1.0) -> ModelPaths:
    return _simulate(model, grid, rng, p, "P")


def normalize_q_weights(ensemble: list[ModelPaths]) -> tuple[list[ModelPaths], float]:
    """Rescale path weights to ensemble mean 1.

    Returns the new ensemble and the normalizer, which estimates the
    conditional-expectation process of exp(-1/2 int (b/sigma)^2 dt) at time 0.
    """
    logw = np.array([m.logWeight for m in ensemble])
    shift = logw.max()
    raw = np.exp(logw - shift)
    norm = raw.mean()
    out = [replace(m, qWeight=float(w / norm)) for m, w in zip(ensemble, raw)]
    return out, float(norm * np.exp(shift))


def simulate_ensemble(model: Model, grid: TimeGrid, seed: int, n_paths: int, p: float = 1.0,
                      start: int = 0) -> list[ModelPaths]:
    paths = [simulate_under_Q(model, grid, RngStream(seed, start + i), p) for i in range(n_paths)]
    return normalize_q_weights(paths)[0]


def activity_rate_path(model: Model, paths: ModelPaths, p: float = 1.0) -> SamplePath:
    """Normalized activity rate eta = pi^2 + c^{pi,pi} / sigma^2 along a path."""
    if isinstance(model, BlackScholesModel):
        return SamplePath(paths.grid, np.full(paths.grid.n + 1, model.b**2 / (p**2 * model.sigma**4)))
    c = paths.coeffs
    return SamplePath(paths.grid, c.pi**2 + (c.dpi * c.xi) ** 2 / c.sigma**2)


def stochastic_exponential(integrand: np.ndarray, dW: np.ndarray, dt: float) -> np.ndarray:
    """exp(-int h dW - 1/2 int h^2 dt) on the grid, left-point sums."""
    integrand = np.broadcast_to(np.asarray(integrand, float), np.shape(dW))
    expo = -np.cumsum(integrand * dW) - 0.5 * np.cumsum(integrand**2) * dt
    return np.exp(np.concatenate(([0.0], expo)))


def memm_density_factor(model: Model, paths: ModelPaths) -> SamplePath:
    """Density factor exp(-int b/sigma dW - 1/2 int (b/sigma)^2 dt) for P-paths."""
    if paths.measure != "P":
        raise InvalidArgument("memm_density_factor expects paths simulated under P")
    if isinstance(model, BlackScholesModel):
        lam = np.full(paths.grid.n, model.b / model.sigma)
    else:
        lam = model.market_price_of_risk(paths.Y.values[:-1])
    return SamplePath(paths.grid, stochastic_exponential(lam, paths.dW, paths.grid.dt))


def frictionless_dual_y(model: Model, fp: FrictionParams, n_paths: int = 20000, n: int = 200,
                        seed: int = 0) -> float:
    """y = E[U'(x + phi . S_T)] for U(x) = -exp(-p x).

    Closed form for Black-Scholes.  For stochastic volatility the W-integral
    is done analytically and the factor part by Monte Carlo over Y paths:
    y = p exp(-p x) E[exp(-1/2 int (b/sigma)^2 dt)].
    """
    base = fp.p * np.exp(-fp.p * fp.x)
    if isinstance(model, BlackScholesModel):
        return float(base * np.exp(-0.5 * (model.b / model.sigma) ** 2 * fp.T))
    return float(base * factor_normalizer(model, TimeGrid(fp.T, n), seed, n_paths))


def factor_normalizer(model: StochVolModel, grid: TimeGrid, seed: int, n_paths: int) -> float:
    """Monte Carlo mean of exp(-1/2 int_0^T (b(Y)/sigma(Y))^2 dt)."""
    total = 0.0
    for i in range(n_paths):
        g = RngStream(seed, i).generator()
        z = g.standard_normal(2 * grid.n)
        Y = _euler_factor(model, grid, z[grid.n:] * np.sqrt(grid.dt))
        lam = model.market_price_of_risk(Y[:-1])
        total += np.exp(-0.5 * np.sum(lam**2) * grid.dt)
    return total / n_paths
