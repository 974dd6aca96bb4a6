"""Randomized oracle-comparison suites for the closed-form solver and the GA.

Instance generators target each activity pattern of the per-client solve by
inverting its prerequisite for the queue-pressure gap, then keep only
instances the dispatcher actually tags as intended.  The suites are shared
by the test suite and the `oracle` CLI subcommand.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from . import policies
from .channel_ga import ChromosomeEvaluator, GaParams, exhaustive_allocate, ga_allocate
from .kkt_solver import Q_CAP, oracle_grid_solve, solve_client
from .lyapunov import ClientContext, LyapunovParams, QueueState
from .state import SystemState
from .wireless import ClientProfile, WirelessConfig

__all__ = [
    "random_instance",
    "kkt_comparison",
    "ga_comparison",
    "make_small_state",
]

_LN2 = math.log(2.0)
Z_DIM = 8010


def _params(eps2: float, v_penalty: float) -> LyapunovParams:
    return LyapunovParams(eta=0.05, l_smooth=1.0, tau=6, tau_e=2,
                          epsilon1=1.0, epsilon2=eps2, v_penalty=v_penalty)


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _base_draw(rng):
    return {
        "v": _log_uniform(rng, 2.5e6, 2e7),
        "d": float(rng.uniform(600, 2400)),
        "w": float(rng.uniform(0.05, 0.4)),
        "theta": float(rng.uniform(0.1, 2.0)),
        "vp": _log_uniform(rng, 5.0, 300.0),
        "eps2": float(rng.uniform(0.01, 1.0)),
        "alpha": 1e-26,
        "f_min": 2e8,
        "f_max": 1e9,
        "p": 0.2,
    }


def _build(d, t_max, gap, q_last) -> tuple[ClientContext, LyapunovParams]:
    params = _params(d["eps2"], d["vp"])
    ctx = ClientContext(
        v_rate=d["v"], weight_n=d["w"], theta_max=d["theta"], data_size=d["d"],
        lambda2=d["eps2"] + gap, z_dim=Z_DIM, t_max=t_max, tau_e=2, gamma=1000.0,
        alpha=d["alpha"], f_min=d["f_min"], f_max=d["f_max"], tx_power=d["p"],
        q_last=int(q_last),
    )
    return ctx, params


def _draw_case1(rng):
    d = _base_draw(rng)
    t_max = float(rng.uniform(0.04, 0.12))
    bound = 2.0 * d["p"] * d["vp"] / (d["v"] * d["w"] * d["theta"] ** 2 * _LN2)
    gap = bound * float(rng.uniform(0.05, 0.9))
    return _build(d, t_max, gap, rng.integers(1, 10))


def _draw_case2(rng):
    d = _base_draw(rng)
    d["v"] = _log_uniform(rng, 6e6, 2e7)
    t_max = float(rng.uniform(0.08, 0.2))
    a4 = _log_uniform(rng, 0.7, 2e4)
    gap = 4.0 * d["p"] * d["vp"] * a4 / (d["v"] * d["w"] * d["theta"] ** 2 * _LN2)
    return _build(d, t_max, gap, rng.integers(1, 10))


def _kappa1_gap(q, target_kappa, d):
    two_q = 2.0**q
    return target_kappa * 4.0 * (two_q - 1.0) ** 3 / (
        d["v"] * d["w"] * d["theta"] ** 2 * two_q * _LN2)


def _tight_t_max(q, f, d):
    cycles = 2.0 * 1000.0 * d["d"]
    return (Z_DIM * q + Z_DIM + 32) / d["v"] + cycles / f


def _draw_case3(rng):
    d = _base_draw(rng)
    d["v"] = _log_uniform(rng, 2e6, 1e7)
    q3 = float(rng.uniform(1.5, 14.0))
    t_max = _tight_t_max(q3, d["f_max"], d)
    kappa = max(d["p"] * d["vp"],
                2.0 * d["vp"] * d["alpha"] * d["f_max"] ** 3) * float(rng.uniform(1.5, 50.0))
    gap = _kappa1_gap(q3, kappa, d)
    return _build(d, t_max, gap, int(np.clip(round(q3), 1, Q_CAP)))


def _draw_case4(rng):
    d = _base_draw(rng)
    d["alpha"] = float(rng.uniform(1e-26, 3e-26))
    d["f_min"] = float(rng.uniform(2.6e8, 6e8))
    d["f_max"] = float(rng.uniform(8e8, 1.2e9))
    q4 = float(rng.uniform(1.5, 12.0))
    t_max = _tight_t_max(q4, d["f_min"], d)
    lo = d["p"] * d["vp"]
    hi = 2.0 * d["vp"] * d["alpha"] * d["f_min"] ** 3
    if hi <= lo:
        return None
    kappa = math.sqrt(lo * hi) * float(rng.uniform(0.85, 1.15))
    if not lo < kappa < hi:
        kappa = math.sqrt(lo * hi)
    gap = _kappa1_gap(q4, kappa, d)
    return _build(d, t_max, gap, int(np.clip(round(q4), 1, Q_CAP)))


def _draw_case5(rng):
    d = _base_draw(rng)
    d["v"] = _log_uniform(rng, 2e6, 8e6)
    q_root = float(rng.uniform(2.0, 12.0))
    f_target = _log_uniform(rng, d["f_min"] * 1.35, d["f_max"] / 1.35)
    t_max = _tight_t_max(q_root, f_target, d)
    two_q = 2.0**q_root
    gap = ((d["p"] + 2.0 * d["alpha"] * f_target**3) * 4.0 * d["vp"]
           * (two_q - 1.0) ** 3 / (d["v"] * d["w"] * d["theta"] ** 2 * two_q * _LN2))
    return _build(d, t_max, gap, int(np.clip(round(q_root), 1, Q_CAP)))


_DRAWERS = {
    "case1": _draw_case1,
    "case2": _draw_case2,
    "case3": _draw_case3,
    "case4": _draw_case4,
    "case5": _draw_case5,
}


def random_instance(rng, case: str, max_tries: int = 200):
    """Draw a feasible instance the dispatcher tags with the requested case."""
    for _ in range(max_tries):
        drawn = _DRAWERS[case](rng)
        if drawn is None:
            continue
        ctx, params = drawn
        out = solve_client(ctx, params)
        if out.feasible and out.case == case:
            return ctx, params, out
    raise RuntimeError(f"could not draw a {case} instance in {max_tries} tries")


def kkt_comparison(trials: int = 1000, seed: int = 0, rel_tol: float = 1e-4) -> dict:
    """Closed form vs the grid oracle over randomized feasible instances."""
    rng = np.random.default_rng(seed)
    cases = list(_DRAWERS)
    histogram: Counter = Counter()
    matches = 0
    gap_violations = 0
    worst_gap = -math.inf
    for k in range(trials):
        case = cases[k % len(cases)]
        ctx, params, closed = random_instance(rng, case)
        histogram[closed.case] += 1
        oracle = oracle_grid_solve(ctx, params)
        if closed.q == oracle.q:
            matches += 1
        rel = (closed.j3 - oracle.j3) / max(abs(oracle.j3), 1e-300)
        worst_gap = max(worst_gap, rel)
        if rel > rel_tol:
            gap_violations += 1
    return {
        "trials": trials,
        "histogram": dict(histogram),
        "match_rate": matches / trials,
        "j3_gap_violations": gap_violations,
        "worst_rel_gap": worst_gap,
        "pass": (gap_violations == 0 and matches / trials >= 0.99
                 and all(histogram.get(c, 0) >= 20 for c in cases)),
    }


def make_small_state(seed: int, num_clients: int = 3, num_channels: int = 3,
                     v_penalty: float = 50.0) -> SystemState:
    """Small random round state for allocator comparisons."""
    rng = np.random.default_rng(seed)
    profiles = [
        ClientProfile(
            data_size=int(rng.integers(600, 2400)),
            distance_m=float(rng.uniform(1500, 2500)),
        )
        for _ in range(num_clients)
    ]
    wireless = WirelessConfig()
    gains = np.outer(
        [10 ** (-11.7) for _ in range(num_clients)],
        rng.uniform(0.3, 2.0, size=num_channels),
    ) * rng.uniform(0.3, 2.0, size=(num_clients, 1))
    eps1 = float(rng.uniform(0.5, 50.0))
    eps2 = float(rng.uniform(0.005, 0.05))
    params = LyapunovParams(eta=0.05, l_smooth=1.0, tau=6, tau_e=2,
                            epsilon1=eps1, epsilon2=eps2, v_penalty=v_penalty)
    return SystemState(
        round_index=1,
        total_rounds=100,
        gains=gains,
        profiles=profiles,
        stats_g=rng.uniform(1.0, 10.0, num_clients),
        stats_sigma2=rng.uniform(0.1, 5.0, num_clients),
        stats_theta_max=rng.uniform(0.2, 1.5, num_clients),
        q_last=np.full(num_clients, 8, dtype=int),
        queues=QueueState(lambda1=2 * eps1, lambda2=float(rng.uniform(1.5, 4.0)) * eps2),
        params=params,
        wireless=wireless,
        z_dim=Z_DIM,
        t_max=0.05,
    )


def ga_comparison(trials: int = 20, seed: int = 0, tol: float = 1e-9) -> dict:
    """GA channel allocation vs full enumeration on small instances."""
    hits = 0
    below = 0
    for k in range(trials):
        state = make_small_state(seed + 1000 + k)
        sizes = np.array([p.data_size for p in state.profiles], dtype=np.float64)
        evaluator = ChromosomeEvaluator(
            state.rate_matrix(), sizes,
            policies._drift_penalty_inner(state, sizes),
            policies._drift_penalty_objective(state),
        )
        rng = np.random.default_rng(seed + 2000 + k)
        ga_best = ga_allocate(evaluator, state.num_channels, GaParams(), rng)
        opt = exhaustive_allocate(evaluator, state.num_channels)
        if ga_best.objective < opt.objective - tol * max(1.0, abs(opt.objective)):
            below += 1
        if abs(ga_best.objective - opt.objective) <= tol * max(1.0, abs(opt.objective)):
            hits += 1
    return {
        "trials": trials,
        "optimum_hits": hits,
        "below_optimum": below,
        "pass": below == 0 and hits >= int(0.9 * trials),
    }
