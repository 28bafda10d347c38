"""Path-level pipeline: corridor, reflection, bid/ask ledger, stopping and dual density.

:func:`path_statistics` chains the modular functions and is the reference.
:func:`run_ensemble` evaluates the same statistics for many paths and a list
of spreads in one fused numba loop per path, with common random numbers across
spreads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dual import DualBound, density_path, dual_bound, stop_rho1, theta_path, weighted_mean_se
from .ledger import apply_strategy, shadow_consistency_gap, stop_time_tau
from .metrics import CEResult, certainty_equivalent
from .models import BlackScholesModel, FrictionParams, ModelPaths, simulate_under_Q
from .notrade import corridor_coeffs, displacement_dynamics, shadow_price
from .paths import RngStream, SamplePath, TimeGrid
from .reflect import initial_offset, solve_skorohod

STATS = (
    "dX",  # X_tau - (x + phi.S_T)
    "gains",  # phi.S_T
    "tau",
    "rho1",
    "rho2",
    "ZbarT",
    "I_dphi2",  # int dPhi^2 d[S,S]
    "I_plus2",  # int dPhiPlus^2 d[S,S]
    "I_bar2",  # same as I_dphi2, stopped at rho ^ tau
    "gap",  # shadow-consistency gap, unstopped strategy
    "maxX",
    "minX",
    "cov_ratio",  # max |c^{dS,S} / c^{S,S}|
    "turnover",
    "theta_err",  # max |theta - p dPhi| sigma S
    "theta_ref",  # max |p dPhi| sigma S
    "coarse",
    "ZG_cov",  # sum dZbar dG, realized covariation of the stopped density and the frictionless gains
)
IDX = {name: i for i, name in enumerate(STATS)}


def psi_from_reflection(phi0: float, sol) -> SamplePath:
    """Candidate share holding phi + dPhi, accumulated from the trade records."""
    psi0 = phi0 + sol.dPhi.values[0]
    return SamplePath(sol.grid, psi0 + sol.up.values - sol.down.values)


def path_statistics(mp: ModelPaths, fp: FrictionParams) -> np.ndarray:
    """All per-path statistics for one spread, computed with the modular API."""
    g = mp.grid
    n, dt = g.n, g.dt
    cc = corridor_coeffs(mp, fp)
    dpp = cc.dPhiPlus
    d0 = initial_offset(fp.xS, mp.S[0], mp.phi[0], dpp[0])
    lower = SamplePath(g, -dpp.values)
    sol = solve_skorohod(mp.phi, lower, dpp, d0)
    psi = psi_from_reflection(mp.phi[0], sol)
    free = apply_strategy(mp.S, psi, fp)
    gains = mp.frictionless_gains
    tau = stop_time_tau(free.X, SamplePath(g, fp.x + gains), fp.eps)
    stopped = apply_strategy(mp.S, psi, fp, stop=tau)

    d = sol.dPhi.values
    dyn = displacement_dynamics(mp, d, fp)
    cSS = SamplePath(g, mp.cSS)
    cdss = SamplePath(g, dyn.cov_S)
    rho1 = stop_rho1(cdss, cSS)
    theta = theta_path(SamplePath(g, dyn.drift), cdss, cSS, rho1)
    dens = density_path(theta, mp.S, cSS, rho1=rho1, tau=tau)

    sh = shadow_price(mp.S, sol.dPhi, cc)
    incr = mp.S.increments + dyn.drift_sim[:-1] * dt + dyn.dM
    gap = shadow_consistency_gap(free, sh, fp, increments=incr)

    c = mp.cSS[:-1] * dt
    stop = dens.stopIdx
    sigS = mp.coeffs.sigma * mp.S.values
    out = np.zeros(len(STATS))
    out[IDX["dX"]] = stopped.X[n] - (fp.x + gains[n])
    out[IDX["gains"]] = gains[n]
    out[IDX["tau"]] = tau
    out[IDX["rho1"]] = rho1
    out[IDX["rho2"]] = dens.rho2Idx
    out[IDX["ZbarT"]] = dens.ZbarT
    out[IDX["I_dphi2"]] = np.sum(d[:-1] ** 2 * c)
    out[IDX["I_plus2"]] = np.sum(dpp.values[:-1] ** 2 * c)
    out[IDX["I_bar2"]] = np.sum(d[:stop] ** 2 * c[:stop])
    out[IDX["gap"]] = gap
    out[IDX["maxX"]] = np.max(np.abs(free.X.values))
    out[IDX["minX"]] = stopped.min_wealth
    out[IDX["cov_ratio"]] = np.max(np.abs(dyn.cov_S / mp.cSS))
    out[IDX["turnover"]] = sol.turnover
    out[IDX["theta_err"]] = np.max(np.abs(theta.values - fp.p * d) * sigS)
    out[IDX["theta_ref"]] = np.max(np.abs(fp.p * d) * sigS)
    out[IDX["coarse"]] = sol.coarse_events
    out[IDX["ZG_cov"]] = np.sum(np.diff(dens.Zbar.values) * mp.phi.values[:-1] * mp.S.increments)
    return out


@njit(cache=True)
def _block(h, dh, d2h, m, S, sigma, xi, mu):
    Sm = S**m
    b = Sm * (dh * mu + 0.5 * d2h * xi * xi + 0.5 * m * (m - 1) * h * sigma * sigma)
    return b, Sm * m * h * sigma, Sm * dh * xi


@njit(cache=True)
def _spread_free(S, sigma, pi, dpi, d2pi, a, da, d2a, mu_q, mu_p, xi, p):
    """Per-point coefficients that do not depend on eps.

    Rows: alpha, gamma/k3, dPhiPlus/eps^(1/3), drifts of phi, alpha, gamma/k3
    under Q and under the simulation measure, the W- and B-loadings of the
    same three blocks.
    """
    m = S.shape[0]
    out = np.empty((15, m))
    for k in range(m):
        Sk = S[k]
        a13 = np.cbrt(a[k])
        g = a13
        dg = da[k] / (3.0 * a13 * a13)
        d2g = (-(2.0 / 3.0) * da[k] * da[k] / a13**5 + d2a[k] / (a13 * a13)) / 3.0
        bq1, w1, z1 = _block(pi[k], dpi[k], d2pi[k], -1, Sk, sigma[k], xi, mu_q[k])
        bq2, w2, z2 = _block(a[k], da[k], d2a[k], 4, Sk, sigma[k], xi, mu_q[k])
        bq3, w3, z3 = _block(g, dg, d2g, 2, Sk, sigma[k], xi, mu_q[k])
        bp1, _, _ = _block(pi[k], dpi[k], d2pi[k], -1, Sk, sigma[k], xi, mu_p[k])
        bp2, _, _ = _block(a[k], da[k], d2a[k], 4, Sk, sigma[k], xi, mu_p[k])
        bp3, _, _ = _block(g, dg, d2g, 2, Sk, sigma[k], xi, mu_p[k])
        out[0, k] = a[k] * Sk**4
        out[1, k] = a13 * Sk * Sk
        out[2, k] = np.cbrt(0.5 / a[k]) / Sk  # (3 eta / (2 p))^(1/3) / S with eta = p / (3a)
        out[3, k] = bq1
        out[4, k] = bq2
        out[5, k] = bq3
        out[6, k] = bp1
        out[7, k] = bp2
        out[8, k] = bp3
        out[9, k] = w1
        out[10, k] = w2
        out[11, k] = w3
        out[12, k] = z1
        out[13, k] = z2
        out[14, k] = z3
    return out


@njit(cache=True)
def _path_kernel(S, dW, dB, sigma, pi, coef, dt, eps_list, p, xB, xS, nstat):
    n = dW.shape[0]
    ne = eps_list.shape[0]
    out = np.zeros((ne, nstat))
    x = xB + xS
    phi = pi / S
    cSS = sigma * sigma * S * S
    gains = np.empty(n + 1)
    gains[0] = 0.0
    for k in range(n):
        gains[k + 1] = gains[k] + phi[k] * (S[k + 1] - S[k])

    for e in range(ne):
        eps = eps_list[e]
        e13 = eps ** (1.0 / 3.0)
        k3 = 3.0 * (eps / 2.0) ** (2.0 / 3.0)
        big = eps ** (-4.0 / 3.0)

        dpp0 = e13 * coef[2, 0]
        d = min(max(xS / S[0] - phi[0], -dpp0), dpp0)
        psi = phi[0] + d
        psi_start = psi
        trade0 = psi - xS / S[0]
        cash = xB - ((1 + eps) if trade0 > 0 else (1 - eps)) * S[0] * trade0
        V = 0.0
        N = 0.0
        tau = n
        rho1 = n
        rho2 = n
        Xstop = 0.0
        X = 0.0
        zbar = 1.0
        Z = 1.0
        stopped_dual = False
        triggered = False
        i_d2 = 0.0
        i_p2 = 0.0
        i_b2 = 0.0
        gap = 0.0
        maxX = 0.0
        minX = np.inf
        cov_ratio = 0.0
        th_err = 0.0
        th_ref = 0.0
        coarse = 0
        up_total = 0.0
        down_total = 0.0
        zg = 0.0

        for k in range(n + 1):
            Sk = S[k]
            dpp = e13 * coef[2, k]
            # unstopped ledger at point k and the safety stop
            X = cash + psi * ((1 - eps) if psi >= 0 else (1 + eps)) * Sk
            if abs(X) > maxX:
                maxX = abs(X)
            if not triggered and (abs(X - (x + gains[k])) > 1.0 or abs(X) > big):
                triggered = True
                tau = k
                Xstop = X
            Xcur = Xstop if triggered else X
            if Xcur < minX:
                minX = Xcur

            # Ito coefficients of dS = alpha d^3 - gamma d
            alpha = coef[0, k]
            gamma = k3 * coef[1, k]
            w1 = coef[9, k]
            w2 = coef[10, k]
            w3 = k3 * coef[11, k]
            z1 = coef[12, k]
            z2 = coef[13, k]
            z3 = k3 * coef[14, k]
            d2 = d * d
            d3 = d2 * d
            fD = 3.0 * alpha * d2 - gamma
            curv = 3.0 * alpha * d * (w1 * w1 + z1 * z1) - 3.0 * d2 * (w2 * w1 + z2 * z1) + (w3 * w1 + z3 * z1)
            bQ = -fD * coef[3, k] + d3 * coef[4, k] - d * k3 * coef[5, k] + curv
            loadW = -fD * w1 + d3 * w2 - d * w3
            covS = loadW * sigma[k] * Sk
            r = abs(covS / cSS[k])
            if r > cov_ratio:
                cov_ratio = r
            if rho1 == n and r > 0.5:
                rho1 = k
            theta = 0.0 if (rho1 < n and k >= rho1) else bQ / (cSS[k] + covS)
            sS = sigma[k] * Sk
            te = abs(theta - p * d) * sS
            tr = abs(p * d) * sS
            if te > th_err:
                th_err = te
            if tr > th_ref:
                th_ref = tr

            # shadow price; contacts sit exactly on bid/ask
            tol = 1e-9 * dpp
            if abs(d + dpp) <= tol:
                se = (1 + eps) * Sk
            elif abs(d - dpp) <= tol:
                se = (1 - eps) * Sk
            else:
                lim = eps * Sk
                se = Sk + min(max(alpha * d3 - gamma * d, -lim), lim)
            if k == 0:
                V = cash + psi * se
            gk = abs(V - psi * se - cash)
            if gk > gap:
                gap = gk

            # dual density and its stop
            if rho2 == n and abs(Z - 1.0) > 0.5:
                rho2 = k
            if not stopped_dual and k >= min(rho1, rho2, tau):
                zbar = Z
                stopped_dual = True
            if k == n:
                if not stopped_dual:
                    zbar = Z
                break

            dS = S[k + 1] - Sk
            ck = cSS[k] * dt
            i_d2 += d2 * ck
            i_p2 += dpp * dpp * ck
            if not stopped_dual:
                i_b2 += d2 * ck
            N += -theta * dS - 0.5 * theta * theta * ck
            Znext = math.exp(N)
            if not stopped_dual:
                zg += (Znext - Z) * phi[k] * dS
            Z = Znext
            bP = -fD * coef[6, k] + d3 * coef[7, k] - d * k3 * coef[8, k] + curv
            loadB = -fD * z1 + d3 * z2 - d * z3
            V += psi * (dS + bP * dt + loadW * dW[k] + loadB * dB[k])

            # reflect against the barriers at k+1 and trade there
            hi = e13 * coef[2, k + 1]
            lo = -hi
            xnew = d - (phi[k + 1] - phi[k])
            if xnew < lo:
                u = lo - xnew
                if u > hi - lo:
                    coarse += 1
                up_total += u
                cash -= (1 + eps) * S[k + 1] * u
                xnew = lo
            elif xnew > hi:
                v = xnew - hi
                if v > hi - lo:
                    coarse += 1
                down_total += v
                cash += (1 - eps) * S[k + 1] * v
                xnew = hi
            d = xnew
            psi = psi_start + up_total - down_total

        XT = Xstop if triggered else X
        out[e, 0] = XT - (x + gains[n])
        out[e, 1] = gains[n]
        out[e, 2] = tau
        out[e, 3] = rho1
        out[e, 4] = rho2
        out[e, 5] = zbar
        out[e, 6] = i_d2
        out[e, 7] = i_p2
        out[e, 8] = i_b2
        out[e, 9] = gap
        out[e, 10] = maxX
        out[e, 11] = minX
        out[e, 12] = cov_ratio
        out[e, 13] = up_total + down_total
        out[e, 14] = th_err
        out[e, 15] = th_ref
        out[e, 16] = coarse
        out[e, 17] = zg
    return out


def kernel_statistics(mp: ModelPaths, eps_list, fp: FrictionParams) -> np.ndarray:
    """Fused statistics for one path and several spreads (rows follow ``eps_list``)."""
    c = mp.coeffs
    S = np.asarray(mp.S.values)
    dB = mp.dB if mp.dB is not None else np.zeros_like(mp.dW)
    coef = _spread_free(S, c.sigma, c.pi, c.dpi, c.d2pi, c.a, c.da, c.d2a, c.mu_q, c.mu_p, float(c.xi), fp.p)
    return _path_kernel(
        S, mp.dW, dB, c.sigma, c.pi, coef, mp.grid.dt, np.asarray(eps_list, float), fp.p, fp.xB, fp.xS, len(STATS)
    )


@dataclass(frozen=True)
class EnsembleResult:
    """Per-path statistics (paths x spreads x STATS) with Q-weights.

    ``ytilde0`` is the ensemble estimate of E[exp(-1/2 int (b/sigma)^2 dt)]
    (closed form for Black-Scholes).
    """

    eps: np.ndarray
    stats: np.ndarray
    weights: np.ndarray
    ytilde0: float
    fp: FrictionParams
    n: int

    def col(self, i: int, name: str) -> np.ndarray:
        return self.stats[:, i, IDX[name]]

    @property
    def y(self) -> float:
        return self.fp.p * math.exp(-self.fp.p * self.fp.x) * self.ytilde0

    @property
    def frictionless_ce(self) -> float:
        return -math.log(self.y / self.fp.p) / self.fp.p

    def primal(self, i: int, control: bool = True) -> CEResult:
        """CE of the strategy; ``control`` uses Zbar_T - 1 (mean zero under Q) as control variate."""
        cv = self.col(i, "ZbarT") - 1 if control else None
        r = certainty_equivalent(self.col(i, "dX"), self.weights, self.fp.p, controls=cv)
        scale = self.y / self.fp.p
        return CEResult(ce=self.frictionless_ce + r.ce, utility=scale * r.utility, stderr=r.stderr, nPaths=r.nPaths)

    def dual(self, i: int, covariation: bool = True) -> DualBound:
        cov = self.col(i, "ZG_cov") if covariation else None
        return dual_bound(self.fp, self.y, self.col(i, "ZbarT"), self.col(i, "gains"), self.weights, covariation=cov)

    def mean(self, i: int, name: str) -> tuple[float, float]:
        return weighted_mean_se(self.col(i, name), self.weights)

    def frac_before_T(self, i: int, name: str) -> float:
        return float(np.mean(self.col(i, name) < self.n))

    def leading_loss(self, i: int) -> float:
        return 0.5 * self.fp.p * self.mean(i, "I_plus2")[0]

    def ergodic_ratio(self, i: int) -> float:
        w = self.weights
        return float(np.sum(w * self.col(i, "I_dphi2")) / np.sum(w * self.col(i, "I_plus2")))


def _chunk(args):
    model, fp, eps, grid, seed, lo, hi = args
    out = np.empty((hi - lo, len(eps), len(STATS)))
    logw = np.empty(hi - lo)
    for j, i in enumerate(range(lo, hi)):
        mp = simulate_under_Q(model, grid, RngStream(seed, i), fp.p)
        out[j] = kernel_statistics(mp, eps, fp)
        logw[j] = mp.logWeight
    return out, logw


def default_workers() -> int:
    return int(os.environ.get("SMALLCOSTS_WORKERS", "1"))


def run_ensemble(model, fp: FrictionParams, eps_list, n: int, n_paths: int, seed: int = 0,
                 workers: int | None = None, chunk: int = 2000) -> EnsembleResult:
    """Simulate ``n_paths`` Q-paths on an n-step grid and collect statistics per spread.

    Path i always uses stream (seed, i), so results do not depend on the
    worker count.
    """
    grid = TimeGrid(fp.T, n)
    eps = np.asarray(eps_list, float)
    workers = default_workers() if workers is None else workers
    jobs = [(model, fp, eps, grid, seed, lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_chunk, jobs))
    else:
        parts = [_chunk(j) for j in jobs]
    stats = np.concatenate([s for s, _ in parts])
    logw = np.concatenate([w for _, w in parts])
    if isinstance(model, BlackScholesModel):
        weights = np.ones(n_paths)
        yt0 = math.exp(-0.5 * (model.b / model.sigma) ** 2 * fp.T)
    else:
        shift = logw.max()
        raw = np.exp(logw - shift)
        weights = raw / raw.mean()
        yt0 = float(raw.mean() * math.exp(shift))
    return EnsembleResult(eps=eps, stats=stats, weights=weights, ytilde0=yt0, fp=fp, n=n)
