"""No-trade corridor geometry and the shadow price.

The corridor around the frictionless holding phi is [phi - dPhiPlus, phi + dPhiPlus]
with ``dPhiPlus = (3 eta eps / (2 p))**(1/3) / S``.  Inside it the offset
dPhi is mapped to a price displacement by the cubic

    dS = alpha dPhi**3 - gamma dPhi,

whose tangency at the corridor edges pins the shadow price S + dS to the ask
at the lower edge and to the bid at the upper edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import FrictionParams, ModelPaths
from .paths import InvalidArgument, SamplePath

BARRIER_RTOL = 1e-9


class DegenerateModel(ValueError):
    """The price-normalized activity rate vanishes somewhere on the path."""


class InconsistentInput(ValueError):
    """An offset path leaves the corridor by more than the contact tolerance."""


def halfwidth(eta, S, p, eps):
    """Upper corridor half-width in shares; the lower one is its negative."""
    eta, S = np.asarray(eta, float), np.asarray(S, float)
    if np.any(eta <= 0) or np.any(S <= 0) or p <= 0 or not 0 < eps < 1:
        raise InvalidArgument("halfwidth needs eta > 0, S > 0, p > 0 and eps in (0, 1)")
    out = np.cbrt(1.5 * eta * eps / p) / S
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CorridorCoeffs:
    alpha: SamplePath
    beta: SamplePath
    gamma: SamplePath
    dPhiPlus: SamplePath
    eps: float

    @property
    def dPhiMinus(self) -> np.ndarray:
        return -self.dPhiPlus.values


def corridor_coeffs(paths: ModelPaths, fp: FrictionParams) -> CorridorCoeffs:
    cpp = paths.cphiphi
    if np.any(~(cpp > 0)):
        raise DegenerateModel("c^{phi,phi} vanishes: the corridor is undefined")
    S = paths.S.values
    alpha = fp.p * paths.cSS / (3 * cpp)
    beta = np.cbrt(S / alpha)
    gamma = 3 * alpha * beta**2 * (fp.eps / 2) ** (2 / 3)
    dpp = halfwidth(paths.eta.values, S, fp.p, fp.eps)
    g = paths.grid
    return CorridorCoeffs(
        alpha=SamplePath(g, alpha),
        beta=SamplePath(g, beta),
        gamma=SamplePath(g, gamma),
        dPhiPlus=SamplePath(g, dpp),
        eps=fp.eps,
    )


def shadow_displacement(dPhi, alpha, gamma):
    return alpha * dPhi**3 - gamma * dPhi


@dataclass(frozen=True)
class ShadowPath:
    dS: SamplePath
    sEps: SamplePath


def on_barrier(dPhi, dPhiPlus, scale: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Masks of grid points at the lower and upper corridor edge."""
    tol = BARRIER_RTOL * np.maximum(dPhiPlus, scale)
    return np.abs(dPhi + dPhiPlus) <= tol, np.abs(dPhi - dPhiPlus) <= tol


def shadow_price(S: SamplePath, dPhi: SamplePath, coeffs: CorridorCoeffs) -> ShadowPath:
    dpp = coeffs.dPhiPlus.values
    d = dPhi.values
    tol = BARRIER_RTOL * dpp
    if np.any(np.abs(d) > dpp + tol):
        k = int(np.argmax(np.abs(d) - dpp - tol > 0))
        raise InconsistentInput(f"offset leaves the corridor at grid index {k}")
    lower, upper = on_barrier(d, dpp)
    # evaluate the cubic on the clipped offset; contacts land on bid/ask exactly
    dc = np.clip(d, -dpp, dpp)
    dS = shadow_displacement(dc, coeffs.alpha.values, coeffs.gamma.values)
    eS = coeffs.eps * S.values
    dS = np.where(lower, eS, np.where(upper, -eS, np.clip(dS, -eS, eS)))
    return ShadowPath(dS=SamplePath(S.grid, dS), sEps=SamplePath(S.grid, S.values + dS))


@dataclass(frozen=True)
class DisplacementDynamics:
    """Ito coefficients of dS = f(dPhi, alpha, gamma) along a path.

    ``drift`` and ``cov_S`` are per grid point (drift under Q and
    d[dS, S]/dt), ``drift_sim`` uses the factor drift of the simulation
    measure, and ``dM`` holds the martingale increments per interval.
    """

    drift: np.ndarray
    drift_sim: np.ndarray
    cov_S: np.ndarray
    dM: np.ndarray


def _block(h, dh, d2h, m, S, c, mu):
    """Drift, martingale loadings and S-covariation of h(Y) S**m."""
    Sm = S**m
    b = Sm * (dh * mu + 0.5 * d2h * c.xi**2 + 0.5 * m * (m - 1) * h * c.sigma**2)
    loadW = Sm * m * h * c.sigma
    loadB = Sm * dh * c.xi
    return b, loadW, loadB


def displacement_dynamics(paths: ModelPaths, dPhi: np.ndarray, fp: FrictionParams) -> DisplacementDynamics:
    c = paths.coeffs
    S = paths.S.values
    k3 = 3 * (fp.eps / 2) ** (2 / 3)
    a13 = np.cbrt(c.a)
    g = k3 * a13
    dg = k3 / 3 * c.da / a13**2
    d2g = k3 / 3 * (-(2 / 3) * c.da**2 / (a13**5) + c.d2a / a13**2)

    terms = {}
    for mu_name in ("mu_q", "mu_p"):
        mu = getattr(c, mu_name)
        terms[mu_name] = (
            _block(c.pi, c.dpi, c.d2pi, -1, S, c, mu),
            _block(c.a, c.da, c.d2a, 4, S, c, mu),
            _block(g, dg, d2g, 2, S, c, mu),
        )
    (bphi, wphi, zphi), (balpha, walpha, zalpha), (bgam, wgam, zgam) = terms["mu_q"]
    sigS = c.sigma * S
    cov = lambda w1, z1, w2, z2: w1 * w2 + z1 * z2

    alpha = c.a * S**4
    gamma = g * S**2
    fD = 3 * alpha * dPhi**2 - gamma
    curv = 3 * alpha * dPhi * cov(wphi, zphi, wphi, zphi) - 3 * dPhi**2 * cov(walpha, zalpha, wphi, zphi) + cov(
        wgam, zgam, wphi, zphi
    )

    def drift(bp, ba, bg):
        return -fD * bp + dPhi**3 * ba - dPhi * bg + curv

    (bphi_p, _, _), (balpha_p, _, _), (bgam_p, _, _) = terms["mu_p"]
    loadW = -fD * wphi + dPhi**3 * walpha - dPhi * wgam
    loadB = -fD * zphi + dPhi**3 * zalpha - dPhi * zgam
    dB = paths.dB if paths.dB is not None else np.zeros_like(paths.dW)
    dM = loadW[:-1] * paths.dW + loadB[:-1] * dB
    return DisplacementDynamics(
        drift=drift(bphi, balpha, bgam),
        drift_sim=drift(bphi_p, balpha_p, bgam_p),
        cov_S=loadW * sigS,
        dM=dM,
    )
