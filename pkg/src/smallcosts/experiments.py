"""Sweeps, verification suites and their file outputs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ExperimentConfig
from .engine import STATS, EnsembleResult, run_ensemble
from .metrics import SweepRow, eps_scaling_fit
from .models import FrictionParams, ModelPaths, simulate_under_Q
from .notrade import corridor_coeffs, shadow_displacement
from .paths import RngStream, SamplePath, TimeGrid
from .reflect import ReflectedSolution, initial_offset, solve_skorohod

SWEEP_COLUMNS = (
    "eps", "primal_ce", "primal_se", "dual_ce_bound", "dual_se", "leading_loss",
    "ergodic_ratio", "tau_early_frac", "rho1_frac", "rho2_frac",
)


def geometry_residuals(mp: ModelPaths, fp: FrictionParams) -> tuple[float, float]:
    """Worst relative errors of dS(dPhiPlus) = -eps S, dS(-dPhiPlus) = eps S and 3 alpha dPhiPlus^2 = gamma."""
    cc = corridor_coeffs(mp, fp)
    a, g, d = cc.alpha.values, cc.gamma.values, cc.dPhiPlus.values
    eS = fp.eps * mp.S.values
    edge = max(
        float(np.max(np.abs(shadow_displacement(d, a, g) + eS) / eS)),
        float(np.max(np.abs(shadow_displacement(-d, a, g) - eS) / eS)),
    )
    tangency = float(np.max(np.abs(3 * a * d**2 - g) / g))
    return edge, tangency


@dataclass(frozen=True)
class SkorohodReport:
    containment: float  # worst barrier violation, shares
    decomposition: float  # worst |dPhi - (dPhi0 - (phi - phi0) + up - down)|
    both_sides: int  # steps with buying and selling at once
    off_barrier: int  # steps trading while not on the corresponding barrier
    monotone: bool


def skorohod_report(phi: SamplePath, lower: SamplePath, upper: SamplePath, sol: ReflectedSolution) -> SkorohodReport:
    d, up, down = sol.dPhi.values, sol.up.values, sol.down.values
    lo, hi = lower.values, upper.values
    contain = float(max(np.max(lo - d), np.max(d - hi), 0.0))
    recon = d[0] - (phi.values - phi.values[0]) + up - down
    du, dd = np.diff(up), np.diff(down)
    both = int(np.sum((du > 0) & (dd > 0)))
    off = int(np.sum((du > 0) & (d[1:] != lo[1:])) + np.sum((dd > 0) & (d[1:] != hi[1:])))
    mono = bool(np.all(du >= 0) and np.all(dd >= 0) and up[0] == 0 and down[0] == 0)
    return SkorohodReport(contain, float(np.max(np.abs(d - recon))), both, off, mono)


def corridor_solution(mp: ModelPaths, fp: FrictionParams):
    cc = corridor_coeffs(mp, fp)
    g = mp.grid
    lower = SamplePath(g, -cc.dPhiPlus.values)
    d0 = initial_offset(fp.xS, mp.S[0], mp.phi[0], cc.dPhiPlus[0])
    return cc, lower, solve_skorohod(mp.phi, lower, cc.dPhiPlus, d0)


def sweep_rows(res: EnsembleResult, seed: int) -> list[SweepRow]:
    rows = []
    for i, e in enumerate(res.eps):
        pr, du = res.primal(i), res.dual(i)
        rows.append(
            SweepRow(
                eps=float(e), primal_ce=pr.ce, primal_se=pr.stderr, dual_ce_bound=du.ce, dual_se=du.ce_stderr,
                leading_loss=res.leading_loss(i), ergodic_ratio=res.ergodic_ratio(i),
                tau_early_frac=res.frac_before_T(i, "tau"), rho1_frac=res.frac_before_T(i, "rho1"),
                rho2_frac=res.frac_before_T(i, "rho2"), n_paths=res.stats.shape[0], seed=seed,
            )
        )
    return rows


def scaling_slope(rows: list[SweepRow], frictionless_ce: float) -> float:
    eps = [r.eps for r in rows]
    losses = [frictionless_ce - r.primal_ce for r in rows]
    try:
        return eps_scaling_fit(eps, losses)
    except ValueError:
        return float("nan")


@dataclass
class SweepTable:
    rows: list[SweepRow]
    slope: float
    frictionless_ce: float
    diagnostics: list[str] = field(default_factory=list)
    ensemble: EnsembleResult | None = None


def run_sweep(cfg: ExperimentConfig) -> SweepTable:
    fp = cfg.friction()
    res = run_ensemble(cfg.model, fp, cfg.eps, n=cfg.n, n_paths=cfg.paths, seed=cfg.seed, workers=cfg.workers)
    rows, diags = [], []
    for row in sweep_rows(res, cfg.seed):
        vals = [getattr(row, c) for c in SWEEP_COLUMNS]
        if not all(math.isfinite(v) for v in vals):
            diags.append(f"eps={row.eps:g}: non-finite result, row dropped")
            continue
        rows.append(row)
    return SweepTable(rows, scaling_slope(rows, res.frictionless_ce), res.frictionless_ce, diags, res)


def _fmt(v) -> str:
    return repr(float(v))


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""
    warning: bool = False  # failed outside the asymptotic regime; reported, not fatal

    @property
    def status(self) -> str:
        return "PASS" if self.passed else ("WARN" if self.warning else "FAIL")


def _check(name, passed, margin, detail="", asymptotic_ok=True) -> Check:
    return Check(name, bool(passed), float(margin), detail, warning=not passed and not asymptotic_ok)


def run_verify(cfg: ExperimentConfig, table: SweepTable | None = None, n_struct: int = 10) -> list[Check]:
    """Exact identities on a few paths plus Monte Carlo checks on the configured ensemble.

    Asymptotic checks at spreads above ``cfg.regime_eps`` are downgraded to warnings.
    """
    table = table or run_sweep(cfg)
    res = table.ensemble
    checks: list[Check] = []
    in_regime = lambda e: e <= cfg.regime_eps
    all_in = all(in_regime(e) for e in cfg.eps)

    grid = TimeGrid(cfg.T, min(cfg.n, 20000))
    for e in cfg.eps:
        fp = cfg.friction(e)
        edge = tang = contain = decomp = 0.0
        bad = 0
        for i in range(n_struct):
            mp = simulate_under_Q(cfg.model, grid, RngStream(cfg.seed, i), cfg.p)
            a, b = geometry_residuals(mp, fp)
            edge, tang = max(edge, a), max(tang, b)
            cc, lower, sol = corridor_solution(mp, fp)
            rep = skorohod_report(mp.phi, lower, cc.dPhiPlus, sol)
            contain = max(contain, rep.containment)
            decomp = max(decomp, rep.decomposition)
            bad += rep.both_sides + rep.off_barrier + (not rep.monotone)
        checks.append(_check(f"cubic edges eps={e:g}", edge <= 1e-10, 1e-10 - edge, f"max rel err {edge:.2e}"))
        checks.append(_check(f"cubic tangency eps={e:g}", tang <= 1e-10, 1e-10 - tang, f"max rel err {tang:.2e}"))
        checks.append(
            _check(f"reflection invariants eps={e:g}", contain == 0 and decomp <= 1e-12 and bad == 0, 1e-12 - decomp,
                   f"containment {contain:.1e}, decomposition {decomp:.1e}, complementarity breaches {bad}")
        )

    for i, row in enumerate(table.rows):
        e = row.eps
        idx = int(np.flatnonzero(res.eps == e)[0])
        checks.append(_check(f"weak duality eps={e:g}", row.sandwich_margin >= 0, row.sandwich_margin,
                             f"dual {row.dual_ce_bound:.6g} vs primal {row.primal_ce:.6g}"))
        zm, zse = res.mean(idx, "ZbarT")
        checks.append(_check(f"dual density mean eps={e:g}", abs(zm - 1) <= 3 * zse, 3 * zse - abs(zm - 1),
                             f"E_Q[Zbar_T] = {zm:.5f} +- {zse:.5f}"))
        gap = float(np.max(res.col(idx, "gap") / res.col(idx, "maxX")))
        checks.append(_check(f"shadow consistency eps={e:g}", gap <= 0.01, 0.01 - gap, f"max rel gap {gap:.2e}",
                             in_regime(e)))

    if table.rows:
        last = table.rows[-1]
        # the second-moment and ergodic identities are leading-order; test them at the smallest spread
        idx = int(np.flatnonzero(res.eps == last.eps)[0])
        m2 = float(np.sum(res.weights * (res.col(idx, "ZbarT") - 1) ** 2) / np.sum(res.weights))
        ref = cfg.p**2 * res.mean(idx, "I_bar2")[0]
        # both vanish when the density is stopped at time 0
        rel = abs(m2 / ref - 1) if ref > 0 else (0.0 if m2 == 0 else math.inf)
        checks.append(_check(f"dual second moment eps={last.eps:g}", rel <= 0.10, 0.10 - rel,
                             f"{m2:.4e} vs {ref:.4e}", in_regime(last.eps)))
        dev = abs(last.ergodic_ratio * 3 - 1)
        checks.append(_check(f"ergodic ratio eps={last.eps:g}", dev <= 0.10, 0.10 - dev,
                             f"ratio {last.ergodic_ratio:.4f}", in_regime(last.eps)))
        for col in ("tau_early_frac", "rho1_frac", "rho2_frac"):
            seq = [getattr(r, col) for r in table.rows]
            mono = all(b <= a for a, b in zip(seq, seq[1:]))
            checks.append(_check(f"{col} nonincreasing", mono, 0.0 if mono else -1.0, str(seq), all_in))
    eps = np.array([r.eps for r in table.rows])
    if eps.size >= 3 and np.log10(eps.max() / eps.min()) >= 2 - 1e-9:
        s = table.slope
        margin = min(s - 0.60, 0.74 - s) if math.isfinite(s) else -1.0
        checks.append(_check("eps^(2/3) scaling slope", margin >= 0, margin, f"slope {s:.4f}", all_in))
    for d in table.diagnostics:
        checks.append(Check(d, False, -1.0, d))
    return checks


def config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["model"] = {"kind": cfg.model.kind, **asdict(cfg.model)}
    return d


def write_outputs(cfg: ExperimentConfig, table: SweepTable, checks: list[Check] | None = None) -> list[str]:
    os.makedirs(cfg.out_dir, exist_ok=True)
    written = []
    if "csv" in cfg.formats:
        path = os.path.join(cfg.out_dir, "sweep.csv")
        with open(path, "w", newline="") as fh:
            fh.write(sweep_csv(table.rows))
        written.append(path)
    if "json" in cfg.formats:
        summary = {
            "scaling_slope": table.slope,
            "frictionless_ce": table.frictionless_ce,
            "rows": [asdict(r) | {"sandwich_margin": r.sandwich_margin} for r in table.rows],
            "diagnostics": table.diagnostics,
            "checks": [asdict(c) | {"status": c.status} for c in (checks or [])],
            "config": config_dict(cfg),
        }
        path = os.path.join(cfg.out_dir, "summary.json")
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
        written.append(path)
    return written


def paths_csv(res: EnsembleResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("path", "eps", "weight") + STATS)
    for j in range(res.stats.shape[0]):
        for i, e in enumerate(res.eps):
            w.writerow([j, _fmt(e), _fmt(res.weights[j])] + [_fmt(v) for v in res.stats[j, i]])
    return buf.getvalue()

