"""Bid/ask accounting for grid strategies, the safety stop and the shadow check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import FrictionParams
from .notrade import ShadowPath
from .paths import SamplePath


@dataclass(frozen=True)
class TradeLedger:
    """Bank account psi0, shares psi and liquidation wealth X on a grid.

    ``bought``/``sold`` are the shares traded at each grid point (index 0
    holds the initial block trade).  ``tauIdx`` is the grid index at which
    the position was liquidated, ``n`` if it was held to the horizon.
    """

    psi0: SamplePath
    psi: SamplePath
    X: SamplePath
    bought: np.ndarray
    sold: np.ndarray
    tauIdx: int
    eps: float

    @property
    def min_wealth(self) -> float:
        return float(self.X.values.min())

    @property
    def terminal_wealth(self) -> float:
        return float(self.X.values[-1])


def liquidation_value(psi0, psi, S, eps):
    return psi0 + psi * np.where(psi >= 0, 1 - eps, 1 + eps) * S


def apply_strategy(S: SamplePath, psi: SamplePath, fp: FrictionParams, stop: int | None = None) -> TradeLedger:
    """Trade ``psi`` at bid/ask starting from (xB, xS), optionally liquidating at ``stop``.

    The gap between ``psi[0]`` and the initial holding ``xS / S[0]`` is a block
    trade at time 0.  Every later change of position is executed at the
    step's bid (sales) or ask (purchases).
    """
    eps = fp.eps
    s = S.values
    n = S.grid.n
    held = np.array(psi.values, dtype=float)
    dpsi = np.diff(held, prepend=fp.xS / s[0])
    bought = np.maximum(dpsi, 0.0)
    sold = np.maximum(-dpsi, 0.0)
    cash = (1 - eps) * s * sold - (1 + eps) * s * bought
    psi0 = fp.xB + np.cumsum(cash)
    X = liquidation_value(psi0, held, s, eps)
    tau = n
    if stop is not None and stop < n:
        # the step's own trade executes first, then the whole position is closed
        tau = int(stop)
        last = held[tau]
        bought[tau] += max(-last, 0.0)
        sold[tau] += max(last, 0.0)
        bought[tau + 1:] = 0.0
        sold[tau + 1:] = 0.0
        psi0[tau:] = X[tau]
        held[tau:] = 0.0
        X[tau:] = X[tau]
    g = S.grid
    return TradeLedger(
        psi0=SamplePath(g, psi0),
        psi=SamplePath(g, held),
        X=SamplePath(g, X),
        bought=bought,
        sold=sold,
        tauIdx=tau,
        eps=eps,
    )


def stop_time_tau(X: SamplePath, frictionlessWealth: SamplePath, eps: float) -> int:
    """First grid index where the wealth gap exceeds 1 or |X| exceeds eps**(-4/3); n if none."""
    x = X.values
    hit = (np.abs(x - frictionlessWealth.values) > 1) | (np.abs(x) > eps ** (-4 / 3))
    idx = np.flatnonzero(hit)
    return int(idx[0]) if idx.size else X.grid.n


def shadow_consistency_gap(
    ledger: TradeLedger,
    shadow: ShadowPath,
    fp: FrictionParams,
    increments: np.ndarray | None = None,
    relative: bool = False,
) -> float:
    """Largest gap between frictionless trading at the shadow price and the bid/ask ledger.

    The shadow wealth ``V = psi0_0 + psi_0 S^e_0 + sum psi dS^e`` is compared with
    the ledger's bank account plus the position marked at the shadow price;
    the difference ``X - (V - psi (S^e - liquidation price))`` is reported.
    ``increments`` replaces the realized shadow increments, e.g. by their Ito
    expansion; with realized increments the gap is zero up to rounding.
    """
    se = shadow.sEps.values
    psi = ledger.psi.values
    dse = np.diff(se) if increments is None else np.asarray(increments, float)
    V = ledger.psi0.values[0] + psi[0] * se[0] + np.concatenate(([0.0], np.cumsum(psi[:-1] * dse)))
    gap = float(np.max(np.abs(V - psi * se - ledger.psi0.values)))
    if relative:
        gap /= max(float(np.max(np.abs(ledger.X.values))), 1e-300)
    return gap
