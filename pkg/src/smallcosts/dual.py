"""Explicit dual density for the stopped shadow price and the duality bound.

The density removes the Q-drift of the shadow price S + dS:

    theta = b^{dS} / (c^{S,S} + c^{dS,S}),   N = -int theta dS - 1/2 int theta^2 d[S,S],

Z = exp(N), stopped when the covariation ratio or Z itself leaves a safe range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import FrictionParams
from .paths import InvalidArgument, SamplePath


def _first(mask: np.ndarray, default: int) -> int:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else default


def stop_rho1(cDSS: SamplePath, cSS: SamplePath) -> int:
    """First grid index where |c^{dS,S} / c^{S,S}| exceeds 1/2, else n."""
    return _first(np.abs(cDSS.values / cSS.values) > 0.5, cSS.grid.n)


def theta_path(drift: SamplePath, cDSS: SamplePath, cSS: SamplePath, rho1: int | None = None) -> SamplePath:
    """Drift-to-variance ratio of the shadow price, zero from ``rho1`` on.

    ``rho1 = n`` means the ratio never triggered; the value at the last grid
    point is then kept (it never enters a left-point sum).
    """
    n = cSS.grid.n
    rho1 = stop_rho1(cDSS, cSS) if rho1 is None else rho1
    th = drift.values / (cSS.values + cDSS.values)
    if rho1 < n:
        th[rho1:] = 0.0
    return SamplePath(drift.grid, th)


@dataclass(frozen=True)
class DualDensity:
    theta: SamplePath
    N: SamplePath
    Z: SamplePath
    Zbar: SamplePath
    rho1Idx: int
    rho2Idx: int
    rhoIdx: int
    stopIdx: int

    @property
    def ZbarT(self) -> float:
        return float(self.Zbar.values[-1])


def density_path(theta: SamplePath, S: SamplePath, cSS: SamplePath | None = None, rho1: int | None = None,
                 tau: int | None = None) -> DualDensity:
    """Log-density by left-point sums; the stopped copy is frozen at rho1 ^ rho2 ^ tau.

    The compensator uses the model's c^{S,S} when given (the discrete density
    is then an exact martingale), otherwise the realized squared increments.
    """
    g = S.grid
    n = g.n
    th = theta.values[:-1]
    dS = S.increments
    qv = cSS.values[:-1] * g.dt if cSS is not None else dS**2
    N = np.concatenate(([0.0], np.cumsum(-th * dS - 0.5 * th**2 * qv)))
    Z = np.exp(N)
    rho1 = n if rho1 is None else rho1
    rho2 = _first(np.abs(Z - 1) > 0.5, n)
    rho = min(rho1, rho2, n)
    stop = min(rho, n if tau is None else tau)
    Zbar = Z.copy()
    Zbar[stop:] = Z[stop]
    return DualDensity(
        theta=theta,
        N=SamplePath(g, N),
        Z=SamplePath(g, Z),
        Zbar=SamplePath(g, Zbar),
        rho1Idx=rho1,
        rho2Idx=rho2,
        rhoIdx=rho,
        stopIdx=stop,
    )


def conjugate(y, p: float):
    """Convex conjugate of U(x) = -exp(-p x): (y/p)(ln(y/p) - 1)."""
    y = np.asarray(y, float)
    if np.any(y <= 0) or p <= 0:
        raise InvalidArgument("conjugate needs y > 0 and p > 0")
    out = y / p * (np.log(y / p) - 1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DualBound:
    """Upper bound on expected utility and the matching certainty equivalent."""

    utility: float
    stderr: float
    ce: float
    ce_stderr: float


def dual_bound(fp: FrictionParams, y: float, ZbarT, gains, weights=None, centered: bool = True,
               covariation=None) -> DualBound:
    """Monte Carlo estimate of E[U~(y Z_T Zbar_T)] + x y from Q-samples.

    ``gains`` are the frictionless gains phi . S_T on the same paths.  With the
    density Z_T = exp(-p phi.S_T) / Z~_0 the bound equals -(y/p)(1 - E_Q[h]),
    h = Zbar ln Zbar - (Zbar - 1) - p (Zbar - 1) phi.S_T, which uses
    E_Q[Zbar_T] = 1 and E_Q[phi.S_T] = 0 to drop zero-mean terms.

    ``covariation`` (per-path sum of dZbar * phi dS) replaces (Zbar - 1) phi.S_T:
    both are discrete Q-martingales started at zero, so the two products have
    the same mean and the realized covariation has far smaller variance.
    """
    zb = np.asarray(ZbarT, float)
    G = np.asarray(gains, float)
    w = np.ones_like(zb) if weights is None else np.asarray(weights, float)
    scale = y / fp.p
    if not centered:
        # U~(y Z_T Zbar) / Z_T, averaged under Q
        u, se = weighted_mean_se(scale * zb * (np.log(zb) - fp.p * (fp.x + G) - 1), w)
        val = u + fp.x * y
        return DualBound(utility=val, stderr=se, ce=float(-np.log(-val) / fp.p), ce_stderr=float(se / (fp.p * -val)))
    cross = (zb - 1) * G if covariation is None else np.asarray(covariation, float)
    h = zb * np.log(zb) - (zb - 1) - fp.p * cross
    m, se = weighted_mean_se(h, w)
    ce = -np.log(scale) / fp.p - np.log1p(-m) / fp.p
    return DualBound(utility=-scale * (1 - m), stderr=scale * se, ce=float(ce), ce_stderr=float(se / (fp.p * (1 - m))))


def weighted_mean_se(values, weights) -> tuple[float, float]:
    """Weighted mean (weights with mean 1) and its standard error."""
    v = np.asarray(values, float)
    w = np.asarray(weights, float)
    n = v.size
    m = float(np.sum(w * v) / np.sum(w))
    if n < 2:
        return m, float("nan")
    se = float(np.sqrt(np.sum((w * (v - m)) ** 2) / (n * (n - 1))) / np.mean(w))
    return m, se
