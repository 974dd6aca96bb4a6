"""Per-round decision policies: the drift-plus-penalty method and four baselines.

All policies share the genetic channel allocator and the cost models, so the
measured energy differences isolate the quantization/scheduling rule itself.
"""

from __future__ import annotations

import math

import numpy as np

from . import kkt_solver
from .channel_ga import ChromEval, ChromosomeEvaluator, GaParams, InnerResult, ga_allocate
from .lyapunov import ClientContext
from .quantizer import payload_bits
from .state import RoundDecision, SystemState

__all__ = [
    "POLICIES",
    "decide_qccf",
    "decide_no_quantization",
    "decide_channel_allocate",
    "decide_principle",
    "decide_same_size",
    "PrincipleSchedule",
]

RAW_BITS = 32  # per-dimension width of an unquantized upload


def _client_context(state: SystemState, i: int, v_rate: float, weight_n: float,
                    data_size: float) -> ClientContext:
    prof = state.profiles[i]
    return ClientContext(
        v_rate=v_rate,
        weight_n=weight_n,
        theta_max=float(state.stats_theta_max[i]),
        data_size=data_size,
        lambda2=state.queues.lambda2,
        z_dim=state.z_dim,
        t_max=state.t_max,
        tau_e=prof.local_epochs,
        gamma=prof.cycles_per_sample,
        alpha=prof.energy_coeff,
        f_min=prof.f_min,
        f_max=prof.f_max,
        tx_power=state.wireless.tx_power_w,
        q_last=int(state.q_last[i]),
    )


def _energies(ctx: ClientContext, f: float, payload: float) -> tuple[float, float]:
    e_cmp = ctx.alpha * ctx.cycles * f * f
    e_com = ctx.tx_power * payload / ctx.v_rate
    return e_cmp, e_com


def _drift_penalty_inner(state: SystemState, sizes_solver: np.ndarray):
    def inner(i: int, v_rate: float, weight_n: float) -> InnerResult:
        ctx = _client_context(state, i, v_rate, weight_n, float(sizes_solver[i]))
        out = kkt_solver.solve_client(ctx, state.params)
        if not out.feasible:
            return InnerResult.infeasible()
        payload = payload_bits(state.z_dim, out.q)
        e_cmp, e_com = _energies(ctx, out.f, payload)
        return InnerResult(True, out.q, out.f, payload, e_cmp, e_com, out.case, out.j3)

    return inner


def _drift_penalty_objective(state: SystemState):
    """Scalar round objective over the inner results, O(participants) per call.

    Algebraically identical to lyapunov.round_objective: the no-participation
    pressure is a constant, each scheduled client subtracts its miss relief
    and adds its weighted variance/quantization terms and energy.
    """
    params = state.params
    g_sq = state.stats_g**2
    press1_base = 4.0 * params.tau * float(np.sum(g_sq))
    relief = 4.0 * params.tau * state.weights_w * g_sq
    a_terms = params.a1 * g_sq + params.a2 * state.stats_sigma2
    quant_coef = state.z_dim * params.l_smooth * state.stats_theta_max**2 / 8.0
    c1 = state.queues.lambda1 - params.epsilon1
    c2 = state.queues.lambda2 - params.epsilon2
    v = params.v_penalty

    def objective(participants, weight_n, inner: dict) -> float:
        press1 = press1_base
        press2 = 0.0
        energy = 0.0
        for i in participants:
            w = weight_n[i]
            res = inner[i]
            press1 += w * a_terms[i] - relief[i]
            press2 += w * quant_coef[i] / (2.0**res.q - 1.0) ** 2
            energy += res.e_cmp + res.e_com
        return c1 * press1 + c2 * press2 + v * energy

    return objective


def _participation_first_objective(state: SystemState):
    """Energy minimization that always prefers scheduling one more client.

    The pure energy objective is degenerate (the empty round costs nothing),
    so baselines without queue pressure rank candidate sets lexicographically:
    participant count first, v-weighted energy second, folded into one scalar
    with a bonus that dominates any feasible energy difference.
    """
    prof_max = max(p.energy_coeff * p.cycles_per_epoch_set * p.f_max**2
                   for p in state.profiles)
    e_bound = prof_max + state.wireless.tx_power_w * state.t_max
    bonus = 10.0 * state.num_clients * state.params.v_penalty * max(e_bound, 1e-12)

    def objective(participants, weight_n, inner: dict) -> float:
        energy = sum(res.e_cmp + res.e_com for res in inner.values())
        return state.params.v_penalty * energy - bonus * len(participants)

    return objective


def _decision_from(best: ChromEval, state: SystemState,
                   quantize_uploads: bool = True) -> RoundDecision:
    u = state.num_clients
    c = state.num_channels
    allocation = np.zeros((c, u), dtype=np.int8)
    for ch, cl in enumerate(best.chrom):
        if cl >= 0:
            allocation[ch, int(cl)] = 1
    participation = np.zeros(u, dtype=np.int8)
    freqs = np.zeros(u)
    levels = np.ones(u, dtype=int)
    payloads = np.zeros(u)
    tags = ["-"] * u
    j3 = np.zeros(u)
    for i, res in best.inner.items():
        participation[i] = 1
        freqs[i] = res.f
        levels[i] = res.q
        payloads[i] = res.payload
        tags[i] = res.case
        j3[i] = res.j3

    sizes = np.array([p.data_size for p in state.profiles], dtype=np.float64)
    total = float(np.sum(sizes * participation))
    weight_n = np.where(participation > 0, sizes / total, 0.0) if total > 0 else np.zeros(u)

    return RoundDecision(
        participation=participation,
        allocation=allocation,
        frequencies=freqs,
        quant_levels=levels,
        payloads=payloads,
        weight_n=weight_n,
        case_tags=tags,
        j3_values=j3,
        objective=best.objective,
        quantize_uploads=quantize_uploads,
    )


def decide_qccf(state: SystemState, ga_params: GaParams, rng) -> RoundDecision:
    """Joint level/frequency/scheduling/allocation by drift-plus-penalty."""
    sizes = np.array([p.data_size for p in state.profiles], dtype=np.float64)
    evaluator = ChromosomeEvaluator(
        state.rate_matrix(), sizes,
        _drift_penalty_inner(state, sizes), _drift_penalty_objective(state),
    )
    best = ga_allocate(evaluator, state.num_channels, ga_params, rng)
    return _decision_from(best, state)


def decide_same_size(state: SystemState, ga_params: GaParams, rng) -> RoundDecision:
    """Drift-plus-penalty under the belief that every dataset is the largest one.

    Solver-side sizes (and hence weights, latencies and energy estimates) use
    max(D); actual costing and aggregation keep the true sizes.
    """
    sizes = np.array([p.data_size for p in state.profiles], dtype=np.float64)
    faked = np.full_like(sizes, sizes.max())
    evaluator = ChromosomeEvaluator(
        state.rate_matrix(), faked,
        _drift_penalty_inner(state, faked), _drift_penalty_objective(state),
    )
    best = ga_allocate(evaluator, state.num_channels, ga_params, rng)
    return _decision_from(best, state)


def decide_no_quantization(state: SystemState, ga_params: GaParams, rng) -> RoundDecision:
    """Upload raw 32-bit models; allocate channels for energy at max participation."""

    def inner(i: int, v_rate: float, weight_n: float) -> InnerResult:
        ctx = _client_context(state, i, v_rate, weight_n, state.profiles[i].data_size)
        payload = RAW_BITS * state.z_dim + 32
        slack = v_rate * state.t_max - payload
        if slack <= 0:
            return InnerResult.infeasible()
        f = max(ctx.f_min, v_rate * ctx.cycles / slack)
        if f > ctx.f_max:
            return InnerResult.infeasible()
        e_cmp, e_com = _energies(ctx, f, payload)
        return InnerResult(True, RAW_BITS, f, payload, e_cmp, e_com, "raw", 0.0)

    evaluator = ChromosomeEvaluator(
        state.rate_matrix(),
        np.array([p.data_size for p in state.profiles], dtype=np.float64),
        inner, _participation_first_objective(state),
    )
    best = ga_allocate(evaluator, state.num_channels, ga_params, rng)
    return _decision_from(best, state, quantize_uploads=False)


def decide_channel_allocate(state: SystemState, ga_params: GaParams, rng) -> RoundDecision:
    """Allocate channels for energy, then saturate the latency budget with bits."""

    def inner(i: int, v_rate: float, weight_n: float) -> InnerResult:
        ctx = _client_context(state, i, v_rate, weight_n, state.profiles[i].data_size)
        q_max = math.floor((v_rate * (state.t_max - ctx.cycles / ctx.f_max)
                            - state.z_dim - 32) / state.z_dim)
        q = min(q_max, kkt_solver.Q_CAP)
        if q < 1:
            return InnerResult.infeasible()
        try:
            f = kkt_solver.min_latency_frequency(q, ctx)
        except kkt_solver.LatencyInfeasible:
            return InnerResult.infeasible()
        payload = payload_bits(state.z_dim, q)
        e_cmp, e_com = _energies(ctx, f, payload)
        return InnerResult(True, q, f, payload, e_cmp, e_com, "saturate", 0.0)

    evaluator = ChromosomeEvaluator(
        state.rate_matrix(),
        np.array([p.data_size for p in state.profiles], dtype=np.float64),
        inner, _participation_first_objective(state),
    )
    best = ga_allocate(evaluator, state.num_channels, ga_params, rng)
    return _decision_from(best, state)


class PrincipleSchedule:
    """Reconstruction of the fixed level schedule: rising with training
    progress and proportional to dataset size, blind to the wireless side."""

    def __init__(self, q_base: float = 2.0, q_span: float = 8.0, slope: float = 1.0):
        self.q_base = q_base
        self.q_span = q_span
        self.slope = slope

    def level(self, round_index: int, total_rounds: int, data_size: float,
              mean_size: float) -> int:
        progress = round_index / max(total_rounds, 1)
        q = self.q_base + self.slope * progress * (data_size / mean_size) * self.q_span
        return int(np.clip(round(q), 1, kkt_solver.Q_CAP))


def decide_principle(state: SystemState, ga_params: GaParams, rng,
                     schedule: PrincipleSchedule | None = None) -> RoundDecision:
    """Force the scheduled level per client; drop clients it makes infeasible."""
    schedule = schedule or PrincipleSchedule()
    sizes = np.array([p.data_size for p in state.profiles], dtype=np.float64)
    mean_size = float(sizes.mean())

    def inner(i: int, v_rate: float, weight_n: float) -> InnerResult:
        ctx = _client_context(state, i, v_rate, weight_n, state.profiles[i].data_size)
        q = schedule.level(state.round_index, state.total_rounds, sizes[i], mean_size)
        try:
            f = kkt_solver.min_latency_frequency(q, ctx)
        except kkt_solver.LatencyInfeasible:
            return InnerResult.infeasible()
        payload = payload_bits(state.z_dim, q)
        e_cmp, e_com = _energies(ctx, f, payload)
        return InnerResult(True, q, f, payload, e_cmp, e_com, "schedule", 0.0)

    evaluator = ChromosomeEvaluator(
        state.rate_matrix(), sizes, inner, _participation_first_objective(state),
    )
    best = ga_allocate(evaluator, state.num_channels, ga_params, rng)
    return _decision_from(best, state)


POLICIES = {
    "qccf": decide_qccf,
    "no_quant": decide_no_quantization,
    "channel_allocate": decide_channel_allocate,
    "principle": decide_principle,
    "same_size": decide_same_size,
}
