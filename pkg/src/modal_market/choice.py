"""Closed-form traveler and driver choice models.

Travelers split each OD's demand over drive / ride / multimodal by a
multinomial logit on deterministic utilities; drivers at every node split
their stock over all service pairs plus sign-out the same way. Two driver
evaluations exist on purpose:

* `driver_flows_logit` is the plain logit at a given stock, used to replay
  and audit solutions;
* `driver_flows_dual` is the unnormalized exponential family indexed by the
  dual prices (service price rho plus the locational value lambda scaled by
  the driver price sensitivity), whose per-choice shares coincide with the
  logit. The equilibrium solver iterates on this form.

All exponentials are max-shift stabilized where shares are formed; the dual
form caps raw exponents at EXP_BOUND and raises OverflowGuard beyond it,
which signals a divergent dual iterate rather than a modeling error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .netgraph import UnknownNode
from .scenario import MODES, SIGN_OUT, Scenario

#: Largest raw exponent materialized by the dual flow form (natural log units).
EXP_BOUND = 700.0


class ChoiceError(Exception):
    """Base class for choice-model errors."""


class UnknownOD(ChoiceError):
    """OD pair not present in the scenario."""


class UnknownChoice(ChoiceError):
    """Driver choice is neither a driver OD pair nor sign-out."""


class OverflowGuard(ChoiceError):
    """An exponent exceeded EXP_BOUND; the dual iterate is divergent."""


@dataclass(frozen=True)
class PriceSystem:
    """Driver prices rho, location values lambda, and derived traveler prices.

    eta_direct[(r,s)] = rho_direct[(r,s)] + lam[s] and
    eta_hub[(r,s)] = rho_hub[(r,s)] + lam[h(r,s)] hold exactly by
    construction. Negative values are legitimate (subsidy signals).
    """

    rho_direct: Mapping[tuple[int, int], float]
    rho_hub: Mapping[tuple[int, int], float]
    lam: Mapping[int, float]
    eta_direct: Mapping[tuple[int, int], float]
    eta_hub: Mapping[tuple[int, int], float]

    @staticmethod
    def build(
        sc: Scenario,
        rho_direct: Mapping[tuple[int, int], float],
        rho_hub: Mapping[tuple[int, int], float],
        lam: Mapping[int, float],
    ) -> "PriceSystem":
        eta_direct = {}
        eta_hub = {}
        for od in sc.ods:
            rs = (od.r, od.s)
            eta_direct[rs] = rho_direct[rs] + lam[od.s]
            eta_hub[rs] = rho_hub[rs] + lam[od.hub]
        return PriceSystem(
            rho_direct=dict(rho_direct),
            rho_hub=dict(rho_hub),
            lam=dict(lam),
            eta_direct=eta_direct,
            eta_hub=eta_hub,
        )

    @staticmethod
    def zero(sc: Scenario) -> "PriceSystem":
        zeros_od = {(od.r, od.s): 0.0 for od in sc.ods}
        return PriceSystem.build(
            sc, zeros_od, dict(zeros_od), {n: 0.0 for n in sc.network.nodes}
        )


@dataclass(frozen=True)
class TravelerFlows:
    """q[(r,s)][mode] in travelers/period; rows sum to demand."""

    q: Mapping[tuple[int, int], Mapping[str, float]]

    def flow(self, r: int, s: int, mode: str) -> float:
        return self.q[(r, s)][mode]


@dataclass(frozen=True)
class DriverFlows:
    """Per-node service flows, sign-out flows, and stocks (drivers/period)."""

    q: Mapping[int, Mapping[tuple[int, int], float]]
    q_H: Mapping[int, float]
    Q: Mapping[int, float]


# ---------------------------------------------------------------------------
# compiled arrays


@dataclass(frozen=True)
class CompiledScenario:
    """Index maps and coefficient arrays for vectorized evaluation.

    Dual vector layout: y[:m] = rho_direct (od order), y[m:2m] = rho_hub
    (od order), y[2m:2m+n_nodes] = lambda (node order).
    """

    sc: Scenario
    node_ids: tuple[int, ...]
    node_index: Mapping[int, int]
    m: int
    n_nodes: int
    d: np.ndarray          # (m,) demands
    s_idx: np.ndarray      # (m,) destination node index
    h_idx: np.ndarray      # (m,) hub node index
    u_drive: np.ndarray    # (m,) full drive utility (price-free)
    u_ride: np.ndarray     # (m,) ride utility at eta = 0
    u_multi: np.ndarray    # (m,) multimodal utility at eta = 0 (fare folded in)
    beta2: float
    beta3: float
    A: np.ndarray          # (n_nodes, 2m) driver exponent at zero prices
    a_H: np.ndarray        # (n_nodes,) sign-out exponent
    dQ: np.ndarray         # (n_nodes,) sign-in rates
    column_pairs: tuple[tuple[int, int], ...]  # (2m,) driver pair per column

    @property
    def dim(self) -> int:
        return 2 * self.m + self.n_nodes


def _compile(sc: Scenario) -> CompiledScenario:
    tp = sc.traveler_params
    dp = sc.driver_params
    node_ids = tuple(sc.network.nodes)
    node_index = {n: i for i, n in enumerate(node_ids)}
    m = len(sc.ods)

    d = np.array([od.demand for od in sc.ods], dtype=float)
    s_idx = np.array([node_index[od.s] for od in sc.ods], dtype=int)
    h_idx = np.array([node_index[od.hub] for od in sc.ods], dtype=int)

    u_drive = np.array(
        [
            tp.beta0_drive
            - tp.beta1_drive * (od.drive_time + od.parking_time)
            - tp.beta2 * (od.drive_cost + od.parking_cost)
            for od in sc.ods
        ]
    )
    u_ride = np.array(
        [tp.beta0_ride - tp.beta1_ride * od.drive_time for od in sc.ods]
    )
    u_multi = np.array(
        [
            tp.beta0_multi
            - tp.beta1_multi * (od.hub_access_time + od.transit_time)
            - tp.beta1_wait * od.transit_wait
            - tp.beta2 * od.transit_fare
            for od in sc.ods
        ]
    )

    n_nodes = len(node_ids)
    column_pairs = tuple(
        [(od.r, od.s) for od in sc.ods] + [(od.r, od.hub) for od in sc.ods]
    )
    A = np.empty((n_nodes, 2 * m))
    for c, (r, _s_prime) in enumerate(column_pairs):
        for i, n in enumerate(node_ids):
            t_nr = 0.0 if n == r else sc.relocation_time(n, r)
            A[i, c] = dp.beta0_at(r) - dp.beta1 * t_nr
    a_H = np.array(
        [dp.beta0_H + dp.beta3 * sc.signout_bonus_at(n) for n in node_ids]
    )
    dQ = np.array([sc.signin_at(n) for n in node_ids], dtype=float)

    return CompiledScenario(
        sc=sc,
        node_ids=node_ids,
        node_index=node_index,
        m=m,
        n_nodes=n_nodes,
        d=d,
        s_idx=s_idx,
        h_idx=h_idx,
        u_drive=u_drive,
        u_ride=u_ride,
        u_multi=u_multi,
        beta2=tp.beta2,
        beta3=dp.beta3,
        A=A,
        a_H=a_H,
        dQ=dQ,
        column_pairs=column_pairs,
    )


def compile_scenario(sc: Scenario) -> CompiledScenario:
    """Compile once per Scenario instance; the result rides along on it."""
    cached = sc.__dict__.get("_compiled")
    if cached is None:
        cached = _compile(sc)
        sc.__dict__["_compiled"] = cached
    return cached


def _softmax(U: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift stabilization."""
    shifted = U - U.max(axis=-1, keepdims=True)
    E = np.exp(shifted)
    return E / E.sum(axis=-1, keepdims=True)


def traveler_utility_matrix(
    cs: CompiledScenario, eta_direct: np.ndarray, eta_hub: np.ndarray
) -> np.ndarray:
    """(m, 3) deterministic utilities at the given traveler prices."""
    return np.stack(
        [
            cs.u_drive,
            cs.u_ride - cs.beta2 * eta_direct,
            cs.u_multi - cs.beta2 * eta_hub,
        ],
        axis=1,
    )


def traveler_flow_matrix(
    cs: CompiledScenario, eta_direct: np.ndarray, eta_hub: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(q, P): (m, 3) flows and probabilities at the given prices."""
    P = _softmax(traveler_utility_matrix(cs, eta_direct, eta_hub))
    return cs.d[:, None] * P, P


def driver_flow_matrix(
    cs: CompiledScenario, rho: np.ndarray, lam: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dual-form driver flows: (E, E_H, Q).

    E[n, c] = exp(A[n, c] + beta3*(rho_c + lambda_n)), E_H[n] the sign-out
    column, Q the row sums. Raises OverflowGuard when any exponent exceeds
    EXP_BOUND.
    """
    expo = cs.A + cs.beta3 * (rho[None, :] + lam[:, None])
    expo_H = cs.a_H + cs.beta3 * lam
    worst = max(
        float(expo.max(initial=-np.inf)), float(expo_H.max(initial=-np.inf))
    )
    if not np.isfinite(worst) or worst > EXP_BOUND:
        raise OverflowGuard(
            f"driver flow exponent {worst:.3g} exceeds bound {EXP_BOUND:g}"
        )
    E = np.exp(expo)
    E_H = np.exp(expo_H)
    return E, E_H, E.sum(axis=1) + E_H


# ---------------------------------------------------------------------------
# public per-OD / per-node operations


def _prices_as_arrays(
    cs: CompiledScenario, prices: PriceSystem
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(eta_direct, eta_hub, rho, lam) arrays in compiled order."""
    sc = cs.sc
    eta_d = np.array([prices.eta_direct[(od.r, od.s)] for od in sc.ods])
    eta_h = np.array([prices.eta_hub[(od.r, od.s)] for od in sc.ods])
    rho = np.array(
        [prices.rho_direct[(od.r, od.s)] for od in sc.ods]
        + [prices.rho_hub[(od.r, od.s)] for od in sc.ods]
    )
    lam = np.array([prices.lam[n] for n in cs.node_ids])
    return eta_d, eta_h, rho, lam


def traveler_utilities(
    sc: Scenario, od: tuple[int, int], prices: PriceSystem
) -> tuple[float, float, float]:
    """(U_drive, U_ride, U_multi) for one OD at the given prices."""
    if od not in set(sc.rs_pairs):
        raise UnknownOD(f"OD {od} not in scenario {sc.name!r}")
    cs = compile_scenario(sc)
    i = sc.rs_pairs.index(od)
    eta_d, eta_h, _, _ = _prices_as_arrays(cs, prices)
    U = traveler_utility_matrix(cs, eta_d, eta_h)
    return float(U[i, 0]), float(U[i, 1]), float(U[i, 2])


def traveler_flows(sc: Scenario, prices: PriceSystem) -> TravelerFlows:
    """Logit demand split for every OD; rows sum to demand by normalization."""
    cs = compile_scenario(sc)
    eta_d, eta_h, _, _ = _prices_as_arrays(cs, prices)
    q, _ = traveler_flow_matrix(cs, eta_d, eta_h)
    return TravelerFlows(
        q={
            (od.r, od.s): {mode: float(v) for mode, v in zip(MODES, q[i])}
            for i, od in enumerate(sc.ods)
        }
    )


def _price_of_choice(sc: Scenario, choice: tuple[int, int], prices: PriceSystem) -> float:
    if choice in set(sc.rs_pairs):
        return prices.rho_direct[choice]
    for od in sc.ods:
        if (od.r, od.hub) == choice:
            return prices.rho_hub[(od.r, od.s)]
    raise UnknownChoice(f"driver choice {choice} not in scenario {sc.name!r}")


def driver_utilities(
    sc: Scenario,
    n: int,
    choice: tuple[int, int] | str,
    prices: PriceSystem,
) -> float:
    """Deterministic utility of one driver option at node n.

    `choice` is a driver OD pair (r, s') or SIGN_OUT. Staying put costs no
    relocation time (t_nn = 0).
    """
    if n not in set(sc.network.nodes):
        raise UnknownNode(f"unknown node {n}")
    dp = sc.driver_params
    if choice == SIGN_OUT:
        return dp.beta0_H + dp.beta3 * sc.signout_bonus_at(n)
    if not (isinstance(choice, tuple) and choice in set(sc.driver_pairs)):
        raise UnknownChoice(f"driver choice {choice!r} not in scenario {sc.name!r}")
    r, _ = choice
    t_nr = 0.0 if n == r else sc.relocation_time(n, r)
    return dp.beta0_at(r) - dp.beta1 * t_nr + dp.beta3 * _price_of_choice(sc, choice, prices)


def driver_flows_logit(
    sc: Scenario, n: int, Q_n: float, prices: PriceSystem
) -> dict[tuple[int, int] | str, float]:
    """Logit split of stock Q_n over all driver pairs plus sign-out."""
    if Q_n < 0:
        raise ValueError(f"stock Q_n must be >= 0, got {Q_n}")
    choices: list[tuple[int, int] | str] = list(sc.driver_pairs) + [SIGN_OUT]
    U = np.array([driver_utilities(sc, n, c, prices) for c in choices])
    P = _softmax(U)
    return {c: float(Q_n * P[i]) for i, c in enumerate(choices)}


def driver_flows_dual(sc: Scenario, prices: PriceSystem) -> DriverFlows:
    """Dual-consistent closed-form driver flows and stocks.

    Shares per node coincide exactly with `driver_flows_logit` at the
    resulting stock: the lambda factor is common to every choice at a node
    and cancels in the normalization.
    """
    cs = compile_scenario(sc)
    _, _, rho, lam = _prices_as_arrays(cs, prices)
    E, E_H, Q = driver_flow_matrix(cs, rho, lam)
    q = {
        n: {pair: float(E[i, c]) for c, pair in enumerate(cs.column_pairs)}
        for i, n in enumerate(cs.node_ids)
    }
    return DriverFlows(
        q=q,
        q_H={n: float(E_H[i]) for i, n in enumerate(cs.node_ids)},
        Q={n: float(Q[i]) for i, n in enumerate(cs.node_ids)},
    )
