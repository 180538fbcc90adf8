"""Scenario experiments and summary metrics over equilibrium solutions.

Everything here is a pure function of (scenario, solution): metrics can be
recomputed bit-identically, sweeps solve each cell independently, and the
hub study compares the three Sioux Falls builtins.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .equilibrium import EquilibriumError, EquilibriumSolution, solve
from .scenario import MODES, Scenario, builtin_sioux, with_param


@dataclass(frozen=True)
class MetricsReport:
    """Per-OD shares and prices, per-node driver quantities, and the
    relocation-time total that proxies empty vehicle travel."""

    mode_share: Mapping[tuple[int, int], Mapping[str, float]]
    eta_direct: Mapping[tuple[int, int], float]
    eta_hub: Mapping[tuple[int, int], float]
    rho_direct: Mapping[tuple[int, int], float]
    rho_hub: Mapping[tuple[int, int], float]
    lam: Mapping[int, float]
    stocks: Mapping[int, float]
    signout: Mapping[int, float]
    total_relocation_time: float
    empty_vmt_proxy: float
    subsidy: Mapping[tuple[int, int], bool]


def total_relocation_time(sc: Scenario, solution: EquilibriumSolution) -> float:
    """Flow-weighted relocation minutes; staying put (n == r) costs zero."""
    total = 0.0
    for n, row in solution.driver.q.items():
        for (r, _s_prime), flow in row.items():
            if n != r:
                total += flow * sc.relocation_time(n, r)
    return total


def metrics(sc: Scenario, solution: EquilibriumSolution) -> MetricsReport:
    shares = {}
    subsidy = {}
    p = solution.prices
    for od in sc.ods:
        rs = (od.r, od.s)
        shares[rs] = {
            mode: solution.traveler.q[rs][mode] / od.demand for mode in MODES
        }
        subsidy[rs] = (
            p.eta_direct[rs] < 0
            or p.eta_hub[rs] < 0
            or p.rho_direct[rs] < 0
            or p.rho_hub[rs] < 0
        )
    reloc = total_relocation_time(sc, solution)
    return MetricsReport(
        mode_share=shares,
        eta_direct=dict(p.eta_direct),
        eta_hub=dict(p.eta_hub),
        rho_direct=dict(p.rho_direct),
        rho_hub=dict(p.rho_hub),
        lam=dict(p.lam),
        stocks=dict(solution.driver.Q),
        signout=dict(solution.driver.q_H),
        total_relocation_time=reloc,
        empty_vmt_proxy=reloc,
        subsidy=subsidy,
    )


@dataclass(frozen=True)
class SweepCell:
    """One solve of a parameter sweep; `error` is set instead of aborting."""

    value: float
    converged: bool
    error: str | None
    iterations: int
    residual_inf: float
    total_drive: float
    total_ride: float
    total_multi: float
    winner: str
    min_rho_direct: float
    min_rho_hub: float
    min_eta_direct: float
    min_eta_hub: float


_NAN = float("nan")


def _cell_from_solution(value: float, sc: Scenario, sol: EquilibriumSolution) -> SweepCell:
    totals = {
        mode: sum(q[mode] for q in sol.traveler.q.values()) for mode in MODES
    }
    return SweepCell(
        value=value,
        converged=sol.converged,
        error=None,
        iterations=sol.iterations,
        residual_inf=sol.residual.inf_norm,
        total_drive=totals["drive"],
        total_ride=totals["ride"],
        total_multi=totals["multi"],
        winner=max(totals, key=lambda mode: totals[mode]),
        min_rho_direct=min(sol.prices.rho_direct.values()),
        min_rho_hub=min(sol.prices.rho_hub.values()),
        min_eta_direct=min(sol.prices.eta_direct.values()),
        min_eta_hub=min(sol.prices.eta_hub.values()),
    )


def sweep_cell(sc: Scenario, param: str, value: float, **solve_opts: Any) -> SweepCell:
    try:
        cell_sc = with_param(sc, param, value)
        sol = solve(cell_sc, **solve_opts)
    except (EquilibriumError, ValueError) as exc:
        return SweepCell(
            value=value, converged=False, error=str(exc), iterations=0,
            residual_inf=_NAN, total_drive=_NAN, total_ride=_NAN,
            total_multi=_NAN, winner="", min_rho_direct=_NAN,
            min_rho_hub=_NAN, min_eta_direct=_NAN, min_eta_hub=_NAN,
        )
    return _cell_from_solution(value, cell_sc, sol)


def sweep(
    sc: Scenario,
    param: str,
    values: Sequence[float],
    **solve_opts: Any,
) -> list[SweepCell]:
    """One independent solve per value; failed cells carry their error."""
    return [sweep_cell(sc, param, v, **solve_opts) for v in values]


@dataclass(frozen=True)
class HubStudyRow:
    scenario: int
    od: tuple[int, int]
    drive: float
    ride: float
    multi: float
    eta_hub: float
    rho_hub: float


@dataclass(frozen=True)
class HubStudyTotals:
    scenario: int
    n_hubs: int
    total_drive: float
    total_ride: float
    total_multi: float
    total_relocation_time: float


@dataclass(frozen=True)
class HubStudy:
    rows: tuple[HubStudyRow, ...]
    totals: tuple[HubStudyTotals, ...]
    summary: Mapping[str, bool]


def hub_study(**solve_opts: Any) -> HubStudy:
    """Solve the three Sioux Falls builtins and tabulate hub-count effects.

    Per-OD movements are reported but only aggregate monotonicity is
    summarized; individual ODs may buck the trend.
    """
    rows: list[HubStudyRow] = []
    totals: list[HubStudyTotals] = []
    for k in (1, 2, 3):
        sc = builtin_sioux(k)
        sol = solve(sc, **solve_opts)
        for od in sc.ods:
            rs = (od.r, od.s)
            q = sol.traveler.q[rs]
            rows.append(
                HubStudyRow(
                    scenario=k,
                    od=rs,
                    drive=q["drive"],
                    ride=q["ride"],
                    multi=q["multi"],
                    eta_hub=sol.prices.eta_hub[rs],
                    rho_hub=sol.prices.rho_hub[rs],
                )
            )
        totals.append(
            HubStudyTotals(
                scenario=k,
                n_hubs=len(sc.hubs),
                total_drive=sum(q["drive"] for q in sol.traveler.q.values()),
                total_ride=sum(q["ride"] for q in sol.traveler.q.values()),
                total_multi=sum(q["multi"] for q in sol.traveler.q.values()),
                total_relocation_time=total_relocation_time(sc, sol),
            )
        )
    t1, t2, t3 = totals
    summary = {
        "multi_strictly_increasing": t1.total_multi < t2.total_multi < t3.total_multi,
        "drive_strictly_decreasing": t1.total_drive > t2.total_drive > t3.total_drive,
        "relocation_strictly_increasing": (
            t1.total_relocation_time < t2.total_relocation_time < t3.total_relocation_time
        ),
    }
    return HubStudy(rows=tuple(rows), totals=tuple(totals), summary=summary)
