"""Closed-form solution of the per-client (frequency, quantization-level) subproblem.

For a scheduled client the objective per_client_j3 is convex in (f, q) when
the quantization queue is above its budget, and the constraint pattern
(latency, frequency box, q >= 1) admits exactly five activity patterns.  Each
pattern has a closed-form candidate and a checkable prerequisite; the first
four are exact, the interior pattern solves a transcendental balance with a
single Newton step anchored at the client's last solved level.  A brute-force
grid oracle provides the independent route for every answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lyapunov import ClientContext, LyapunovParams, per_client_j3

__all__ = [
    "LatencyInfeasible",
    "NonconvexRegime",
    "NoCaseSatisfied",
    "ClientSolveOutput",
    "min_latency_frequency",
    "solve_relaxed",
    "round_quant_level",
    "solve_client",
    "oracle_grid_solve",
    "Q_CAP",
]

Q_CAP = 32  # guard for the Newton step and the integer search
_LN2 = math.log(2.0)
_TOL = 1e-9  # absolute tolerance of prerequisite checks, on their natural scale


class LatencyInfeasible(ValueError):
    """The latency budget cannot be met at this quantization level."""


class NonconvexRegime(ValueError):
    """lambda2 <= epsilon2: the convexity premise fails; use the grid oracle."""


class NoCaseSatisfied(RuntimeError):
    """No activity pattern's prerequisite held numerically."""


@dataclass(frozen=True)
class ClientSolveOutput:
    q: int
    f: float
    case: str
    j3: float
    feasible: bool = True

    @staticmethod
    def infeasible() -> "ClientSolveOutput":
        return ClientSolveOutput(0, math.nan, "infeasible", math.inf, False)


def _bit_slack(q: float, ctx: ClientContext) -> float:
    """Bits deliverable within the budget beyond the payload at level q."""
    return ctx.v_rate * ctx.t_max - ctx.z_dim * q - ctx.z_dim - 32


def _latency_min_f(q: float, ctx: ClientContext) -> float | None:
    """min_latency_frequency without the raising contract (hot path)."""
    slack = ctx.v_rate * ctx.t_max - ctx.z_dim * q - ctx.z_dim - 32
    if slack <= 0:
        return None
    f = ctx.v_rate * ctx.cycles / slack
    if f < ctx.f_min:
        return ctx.f_min
    if f > ctx.f_max * (1.0 + 1e-12):
        return None
    return min(f, ctx.f_max)


def min_latency_frequency(q: float, ctx: ClientContext) -> float:
    """Lowest frequency meeting the latency budget at level q, floored at f_min.

    Raises LatencyInfeasible when no frequency in the box works.
    """
    f = _latency_min_f(q, ctx)
    if f is None:
        raise LatencyInfeasible(f"latency budget unreachable at q={q}")
    return f


def _pressure(ctx: ClientContext, params: LyapunovParams) -> float:
    """Shared factor of the quantization-side stationarity terms."""
    return ((ctx.lambda2 - params.epsilon2) * ctx.weight_n
            * params.l_smooth * ctx.theta_max**2)


def _cubic_positive_root(a4: float) -> float:
    """Positive root of x^3 - a4*x - a4 = 0.

    The radical form is real only while the discriminant 1/4 - a4/27 is
    nonnegative; past that the three-real-root regime needs the
    trigonometric form, which still has a unique positive root.
    """
    disc = 0.25 - a4 / 27.0
    if disc >= 0.0:
        root = math.sqrt(disc)
        # both radicands are in [0, 1]: root < 1/2 whenever a4 > 0
        return a4 ** (1.0 / 3.0) * ((0.5 + root) ** (1.0 / 3.0)
                                    + (0.5 - root) ** (1.0 / 3.0))
    # three real roots; the largest (k = 0) is the positive one
    theta = math.acos(1.5 * math.sqrt(3.0 / a4))
    return 2.0 * math.sqrt(a4 / 3.0) * math.cos(theta / 3.0)


def _latency(f: float, q: float, ctx: ClientContext) -> float:
    return ctx.cycles / f + (ctx.z_dim * q + ctx.z_dim + 32) / ctx.v_rate


def solve_relaxed(ctx: ClientContext, params: LyapunovParams,
                  q_cap: int = Q_CAP) -> tuple[float, float, str]:
    """Relaxed (continuous-q) optimum via the five activity patterns.

    Returns (q_hat, f_hat, case tag).  Raises NonconvexRegime when the queue
    pressure does not make the problem convex, and NoCaseSatisfied when no
    prerequisite holds numerically (the caller falls back to the oracle).
    """
    if ctx.lambda2 <= params.epsilon2:
        raise NonconvexRegime("lambda2 <= epsilon2")

    # locals for the hot path; j3 below mirrors lyapunov.per_client_j3 exactly
    v, w = ctx.v_rate, ctx.weight_n
    z, t_max, cycles = ctx.z_dim, ctx.t_max, ctx.cycles
    alpha, f_min, f_max = ctx.alpha, ctx.f_min, ctx.f_max
    v_pen = params.v_penalty
    p_v = ctx.tx_power * v_pen
    press = (ctx.lambda2 - params.epsilon2) * w * params.l_smooth * ctx.theta_max**2
    rest = z + 32.0
    quant_c = press * z / 8.0
    cmp_c = v_pen * alpha * cycles
    com_c = p_v * z / v
    best = None  # (j3, q, f, tag); smallest j3 wins when several patterns match

    def consider(tag, q_hat, f_hat):
        nonlocal best
        val = quant_c / (2.0**q_hat - 1.0) ** 2 + cmp_c * f_hat * f_hat + com_c * q_hat
        if best is None or val < best[0]:
            best = (val, q_hat, f_hat, tag)

    # minimum level is optimal: stationarity multiplier of q >= 1 stays nonnegative
    slack1 = v * t_max - z - rest
    if slack1 > 0:
        f1 = v * cycles / slack1
        f1 = f_min if f1 < f_min else f1
        if f1 <= f_max * (1.0 + 1e-12):
            rhs = 0.5 * v * press * _LN2
            if p_v >= rhs - _TOL * max(1.0, p_v, rhs):
                consider("case1", 1.0, min(f1, f_max))

    # latency slack at the frequency floor: level set by the cubic balance
    a4 = v * press * _LN2 / (4.0 * p_v)
    if a4 > 0:
        q2 = math.log2(1.0 + _cubic_positive_root(a4))
        if q2 > 1.0 - _TOL:
            lat2 = cycles / f_min + (z * q2 + rest) / v
            if t_max >= lat2 - _TOL * max(1.0, t_max, lat2):
                consider("case2", q2, f_min)

    # latency tight at the frequency ceiling
    q3 = (v * t_max - v * cycles / f_max - rest) / z
    if 1.0 - _TOL < q3 <= 300.0:
        two_q = 2.0**q3
        k1 = v * press * two_q * _LN2 / (4.0 * (two_q - 1.0) ** 3)
        ceil_e = 2.0 * v_pen * alpha * f_max**3
        if (k1 >= p_v - _TOL * max(1.0, k1, p_v)
                and k1 >= ceil_e - _TOL * max(1.0, k1, ceil_e)):
            consider("case3", q3, f_max)

    # latency tight at the frequency floor
    q4 = (v * t_max - v * cycles / f_min - rest) / z
    if 1.0 - _TOL < q4 <= 300.0:
        two_q = 2.0**q4
        k1 = v * press * two_q * _LN2 / (4.0 * (two_q - 1.0) ** 3)
        floor_e = 2.0 * v_pen * alpha * f_min**3
        if (k1 >= p_v - _TOL * max(1.0, k1, p_v)
                and floor_e >= k1 - _TOL * max(1.0, k1, floor_e)):
            consider("case4", q4, f_min)

    # interior: one Newton step on the transcendental balance, anchored at q_last
    q5 = _interior_newton_step(ctx, params, q_cap)
    if q5 is not None and q5 > 1.0 - _TOL:
        slack5 = v * t_max - z * q5 - rest
        if slack5 > 0:
            f5 = v * cycles / slack5
            if f_min * (1.0 - _TOL) < f5 < f_max * (1.0 + _TOL):
                consider("case5", q5, f5)

    if best is None:
        raise NoCaseSatisfied("no activity pattern matched")
    _, q_hat, f_hat, tag = best
    return q_hat, f_hat, tag


def _interior_newton_step(ctx: ClientContext, params: LyapunovParams,
                          q_cap: int) -> float | None:
    """Newton update of the interior stationarity balance from q_last.

    The balance equates tx power plus the marginal computation-energy of the
    latency-tight frequency against the marginal quantization-error relief.
    Returns None when the anchor itself cannot meet the latency budget.
    """
    q0 = float(ctx.q_last)
    slack0 = _bit_slack(q0, ctx)
    if slack0 <= 0:
        return None
    press = ctx.v_rate * _pressure(ctx, params)
    v_cyc = ctx.v_rate * ctx.cycles
    f0 = v_cyc / slack0
    two_q = 2.0**q0
    relief = press * two_q * _LN2 / (4.0 * params.v_penalty * (two_q - 1.0) ** 3)
    residual = relief - 2.0 * ctx.alpha * f0**3 - ctx.tx_power
    slope = (press * _LN2**2 * two_q * (2.0 * two_q + 1.0)
             / (4.0 * params.v_penalty * (two_q - 1.0) ** 4)
             + 6.0 * ctx.alpha * ctx.z_dim * v_cyc**3 / slack0**4)
    if slope <= 0:
        return None
    q5 = q0 + residual / slope
    return min(max(q5, 1.0), float(q_cap))


def round_quant_level(q_hat: float, ctx: ClientContext, params: LyapunovParams,
                      case: str = "", q_cap: int = Q_CAP) -> ClientSolveOutput:
    """Integerize the relaxed level: floor and ceiling are the only candidates.

    Each candidate is paired with its latency-minimal frequency; infeasible
    candidates are skipped and the floor wins exact ties.
    """
    if q_hat < 1.0:
        raise ValueError(f"relaxed level must be >= 1, got {q_hat}")
    lo = max(1, min(int(math.floor(q_hat)), q_cap))
    hi = max(1, min(int(math.ceil(q_hat)), q_cap))
    best: ClientSolveOutput | None = None
    for q in (lo, hi) if hi > lo else (lo,):  # floor first; strict < keeps it on ties
        f = _latency_min_f(q, ctx)
        if f is None:
            continue
        j3 = per_client_j3(f, float(q), ctx, params)
        if best is None or j3 < best.j3:
            best = ClientSolveOutput(q, f, case, j3)
    if best is None:
        return ClientSolveOutput.infeasible()
    return best


def solve_client(ctx: ClientContext, params: LyapunovParams,
                 q_cap: int = Q_CAP) -> ClientSolveOutput:
    """Full per-client solve: case dispatch, integer rounding, oracle fallbacks."""
    if _latency_min_f(1.0, ctx) is None:
        return ClientSolveOutput.infeasible()

    if ctx.lambda2 <= params.epsilon2:
        out = oracle_grid_solve(ctx, params, q_cap=q_cap)
        return ClientSolveOutput(out.q, out.f, "nonconvex_grid", out.j3, out.feasible)

    try:
        q_hat, _f_hat, case = solve_relaxed(ctx, params, q_cap)
    except NoCaseSatisfied:
        out = oracle_grid_solve(ctx, params, q_cap=q_cap)
        return ClientSolveOutput(out.q, out.f, "grid_fallback", out.j3, out.feasible)
    return round_quant_level(q_hat, ctx, params, case=case, q_cap=q_cap)


def _min_feasible_frequency_bisect(q: int, ctx: ClientContext,
                                   iters: int = 80) -> float | None:
    """Feasibility-boundary frequency by bisection on the latency itself.

    Independent of the closed form: brackets the constraint between f_min
    and f_max and bisects the monotone latency function.
    """
    if _latency(ctx.f_max, q, ctx) > ctx.t_max:
        return None
    if _latency(ctx.f_min, q, ctx) <= ctx.t_max:
        return ctx.f_min
    lo, hi = ctx.f_min, ctx.f_max  # lo infeasible, hi feasible
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _latency(mid, q, ctx) <= ctx.t_max:
            hi = mid
        else:
            lo = mid
    return hi


def oracle_grid_solve(ctx: ClientContext, params: LyapunovParams,
                      q_cap: int = Q_CAP, f_points: int = 128) -> ClientSolveOutput:
    """Brute-force reference: integer sweep on q, grid + bisection on f."""
    if f_points < 100:
        raise ValueError("use at least 100 frequency grid points")
    f_grid = np.linspace(ctx.f_min, ctx.f_max, f_points)
    best: ClientSolveOutput | None = None
    for q in range(1, q_cap + 1):
        lat = ctx.cycles / f_grid + (ctx.z_dim * q + ctx.z_dim + 32) / ctx.v_rate
        feas = f_grid[lat <= ctx.t_max]
        if feas.size:
            cand_f = float(feas.min())
            refined = _min_feasible_frequency_bisect(q, ctx)
            if refined is not None and refined < cand_f:
                cand_f = refined
        else:
            refined = _min_feasible_frequency_bisect(q, ctx)
            if refined is None:
                continue
            cand_f = refined
        j3 = per_client_j3(cand_f, float(q), ctx, params)
        if best is None or j3 < best.j3:
            best = ClientSolveOutput(q, cand_f, "oracle", j3)
    if best is None:
        return ClientSolveOutput.infeasible()
    return best
