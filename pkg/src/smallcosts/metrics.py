"""Certainty equivalents, loss formulas, the ergodic factor and the eps-scaling fit."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dual import weighted_mean_se
from .models import BlackScholesModel, FrictionParams, ModelPaths
from .notrade import halfwidth
from .paths import InvalidArgument, SamplePath


class UndefinedAverage(ValueError):
    """The quadratic-variation clock did not advance."""


@dataclass(frozen=True)
class CEResult:
    ce: float
    utility: float
    stderr: float
    nPaths: int


def certainty_equivalent(samples, weights=None, p: float = 1.0, controls=None) -> CEResult:
    """CE(X) = -(1/p) ln E[exp(-p X)] with a delta-method standard error.

    The exponent is shifted by the smallest sample so large wealth spreads do
    not overflow.  ``controls`` (samples, or samples x k) are variables with
    known mean zero; E[exp(-p X)] is then a regression-adjusted mean.
    """
    if p <= 0:
        raise InvalidArgument(f"p must be positive, got {p}")
    x = np.asarray(samples, float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, float)
    if np.any(w < 0):
        raise InvalidArgument("weights must be nonnegative")
    shift = float(x.min())
    e = np.exp(-p * (x - shift))
    if controls is not None:
        e = e - control_adjustment(e, controls, w)
    m, se = weighted_mean_se(e, w)
    if not m > 0:
        raise InvalidArgument("control-variate adjusted mean is not positive")
    ce = shift - np.log(m) / p
    with np.errstate(over="ignore"):  # the utility may overflow where the CE does not
        u = float(-m * np.exp(-p * shift))
    return CEResult(ce=float(ce), utility=u, stderr=float(se / (p * m)), nPaths=x.size)


def control_adjustment(values, controls, weights) -> np.ndarray:
    """beta . c for the weighted least-squares fit of ``values`` on zero-mean ``controls``."""
    c = np.asarray(controls, float)
    c = c.reshape(c.shape[0], -1)
    w = np.asarray(weights, float)
    sw = np.sqrt(w)
    v = np.asarray(values, float)
    cm = np.sum(w[:, None] * c, axis=0) / np.sum(w)
    vm = np.sum(w * v) / np.sum(w)
    beta, *_ = np.linalg.lstsq(sw[:, None] * (c - cm), sw * (v - vm), rcond=None)
    return c @ beta


def loss_integral(dPhiPlus: np.ndarray, cSS: np.ndarray, dt: float) -> float:
    """Left-point sum of (dPhiPlus)^2 c^{S,S} dt over the grid."""
    return float(np.sum(dPhiPlus[:-1] ** 2 * cSS[:-1]) * dt)


def leading_loss(paths: ModelPaths | Sequence[ModelPaths], fp: FrictionParams) -> float:
    """(p/2) E_Q[int (dPhiPlus)^2 d[S,S]] over a weighted Q-ensemble."""
    ens = [paths] if isinstance(paths, ModelPaths) else list(paths)
    vals = np.array(
        [
            loss_integral(halfwidth(m.eta.values, m.S.values, fp.p, fp.eps), m.cSS, m.grid.dt)
            for m in ens
        ]
    )
    w = np.array([m.qWeight for m in ens])
    return 0.5 * fp.p * float(np.sum(w * vals) / np.sum(w))


def bs_leading_loss(model: BlackScholesModel, fp: FrictionParams) -> float:
    """(p/2)(dPhiPlus S)^2 sigma^2 T: the Black-Scholes loss, path independent."""
    u = halfwidth(model.b**2 / (fp.p**2 * model.sigma**4), 1.0, fp.p, fp.eps)
    return 0.5 * fp.p * u**2 * model.sigma**2 * fp.T


def ergodic_ratio(dPhi, dPhiPlus, cSS, dt: float, weights=None) -> float:
    """E_Q[int dPhi^2 d[S,S]] / E_Q[int dPhiPlus^2 d[S,S]] over paths.

    Each argument is a 2-D array (paths x grid points) or a single path.
    """
    d = np.atleast_2d(np.asarray(dPhi, float))
    dp = np.atleast_2d(np.asarray(dPhiPlus, float))
    c = np.atleast_2d(np.asarray(cSS, float))
    num = np.sum(d[:, :-1] ** 2 * c[:, :-1], axis=1) * dt
    den = np.sum(dp[:, :-1] ** 2 * c[:, :-1], axis=1) * dt
    return ratio_of_means(num, den, weights)


def ratio_of_means(num, den, weights=None) -> float:
    w = np.ones(np.shape(num)) if weights is None else np.asarray(weights, float)
    return float(np.sum(w * num) / np.sum(w * den))


def qv_weighted_average(q: SamplePath, cqq: SamplePath | None = None, exclude=None) -> float:
    """int q^2 d[q,q] / int d[q,q] on the grid.

    Without ``cqq`` the clock is the realized quadratic variation.
    ``exclude`` masks intervals (length n) left out of both integrals.
    """
    qv = q.increments**2 if cqq is None else cqq.values[:-1] * q.grid.dt
    if exclude is not None:
        qv = np.where(np.asarray(exclude, bool), 0.0, qv)
    total = float(np.sum(qv))
    if not total > 0:
        raise UndefinedAverage("total quadratic variation is zero")
    return float(np.sum(q.values[:-1] ** 2 * qv) / total)


def guard_flags(bq: np.ndarray, cqq: np.ndarray, eps: float) -> np.ndarray:
    """Intervals where |b^q| > 1/eps or c^{q,q} < eps."""
    return (np.abs(bq) > 1 / eps) | (cqq < eps)


def eps_scaling_fit(epsList, lossList) -> float:
    """Least-squares slope of log(loss) against log(eps)."""
    e = np.asarray(epsList, float)
    l = np.asarray(lossList, float)
    if e.size < 3 or e.size != l.size:
        raise InvalidArgument("need at least three matching (eps, loss) pairs")
    if np.any(e <= 0) or np.any(l <= 0):
        raise InvalidArgument("eps and losses must be positive for a log-log fit")
    if np.log10(e.max() / e.min()) < 2 - 1e-9:
        raise InvalidArgument("eps values must span at least two decades")
    return float(np.polyfit(np.log(e), np.log(l), 1)[0])


def primal_utility(model, fp: FrictionParams, nPaths: int, seed: int = 0, n: int = 1000) -> CEResult:
    """End-to-end estimate of the candidate strategy's expected utility and CE.

    Paths are simulated under Q and reweighted to P with the density
    exp(-p phi.S_T) / Z~_0.
    """
    from .engine import run_ensemble

    res = run_ensemble(model, fp, [fp.eps], n=n, n_paths=nPaths, seed=seed)
    return res.primal(0)


@dataclass(frozen=True)
class SweepRow:
    """Aggregated results for one spread; CE figures in currency units."""

    eps: float
    primal_ce: float
    primal_se: float
    dual_ce_bound: float
    dual_se: float
    leading_loss: float
    ergodic_ratio: float
    tau_early_frac: float
    rho1_frac: float
    rho2_frac: float
    n_paths: int
    seed: int

    @property
    def sandwich_margin(self) -> float:
        """dual - primal + 3 combined standard errors; nonnegative when the sandwich holds."""
        return self.dual_ce_bound - self.primal_ce + 3 * float(np.hypot(self.primal_se, self.dual_se))
