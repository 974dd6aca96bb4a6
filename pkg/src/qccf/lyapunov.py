"""Virtual queues and the drift-plus-penalty objectives the solvers minimize.

Two queues track the long-term budgets: lambda1 accumulates the data-property
and participation pressure, lambda2 the quantization-error pressure.  The
per-round objective trades their drift against v_penalty-weighted energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "LyapunovParams",
    "QueueState",
    "ClientContext",
    "arrival_lambda1",
    "arrival_lambda2",
    "update_lambda1",
    "update_lambda2",
    "round_objective",
    "per_client_j3",
    "j3_constant_terms",
]


@dataclass(frozen=True)
class LyapunovParams:
    """Constants of the drift-plus-penalty transform.

    a1 and a2 are the closed-form coefficients multiplying the per-client
    gradient-bound and mini-batch-variance terms; they exist only under the
    contraction premise 2 * eta^2 * tau^2 * L^2 < 1, which is checked here.
    """

    eta: float
    l_smooth: float
    tau: int
    tau_e: int
    epsilon1: float
    epsilon2: float
    v_penalty: float

    def __post_init__(self):
        if self.v_penalty <= 0:
            raise ValueError("v_penalty must be positive")
        if 2.0 * self.eta**2 * self.tau**2 * self.l_smooth**2 >= 1.0:
            raise ValueError(
                "contraction premise violated: need 2*eta^2*tau^2*L^2 < 1 "
                f"(got {2.0 * self.eta**2 * self.tau**2 * self.l_smooth**2:.4g})"
            )

    @property
    def a1(self) -> float:
        e2l2 = self.eta**2 * self.l_smooth**2
        t = self.tau
        return 2.0 * e2l2 * (2 * t**3 - 3 * t**2 + t) / (3.0 - 6.0 * e2l2 * t**2)

    @property
    def a2(self) -> float:
        e2l2 = self.eta**2 * self.l_smooth**2
        t = self.tau
        return self.eta * self.l_smooth * t + e2l2 * (t**2 - t) / (1.0 - 2.0 * e2l2 * t**2)


@dataclass
class QueueState:
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("queues are nonnegative")


def arrival_lambda1(participation, weights_w, weight_n, g_sq, sigma_sq,
                    params: LyapunovParams) -> float:
    """Per-round data/participation pressure entering the first queue."""
    a = np.asarray(participation, dtype=np.float64)
    miss = 4.0 * params.tau * np.sum((1.0 - a * np.asarray(weights_w)) * g_sq)
    wn = np.asarray(weight_n, dtype=np.float64)
    return float(miss + params.a1 * np.sum(wn * g_sq) + params.a2 * np.sum(wn * sigma_sq))


def arrival_lambda2(weight_n, q_levels, theta_max, z_dim, params: LyapunovParams) -> float:
    """Per-round quantization-error pressure entering the second queue.

    Entries with zero participant weight contribute nothing, so the q/f
    values of unscheduled clients never matter.
    """
    wn = np.asarray(weight_n, dtype=np.float64)
    q = np.asarray(q_levels, dtype=np.float64)
    total = 0.0
    for i in np.flatnonzero(wn > 0):
        total += (wn[i] * z_dim * params.l_smooth * theta_max[i] ** 2
                  / (8.0 * (2.0 ** q[i] - 1.0) ** 2))
    return total


def update_lambda1(queues: QueueState, participation, weights_w, weight_n,
                   g_sq, sigma_sq, params: LyapunovParams) -> float:
    arr = arrival_lambda1(participation, weights_w, weight_n, g_sq, sigma_sq, params)
    return max(queues.lambda1 + arr - params.epsilon1, 0.0)


def update_lambda2(queues: QueueState, weight_n, q_levels, theta_max, z_dim,
                   params: LyapunovParams) -> float:
    arr = arrival_lambda2(weight_n, q_levels, theta_max, z_dim, params)
    return max(queues.lambda2 + arr - params.epsilon2, 0.0)


def round_objective(
    queues: QueueState,
    participation,
    weights_w,
    weight_n,
    g_sq,
    sigma_sq,
    theta_max,
    q_levels,
    energy_per_client,
    z_dim: int,
    params: LyapunovParams,
) -> float:
    """Drift-plus-penalty value of one candidate round decision."""
    a = np.asarray(participation, dtype=np.float64)
    press1 = arrival_lambda1(participation, weights_w, weight_n, g_sq, sigma_sq, params)
    press2 = arrival_lambda2(weight_n, q_levels, theta_max, z_dim, params)
    energy = float(np.sum(a * np.asarray(energy_per_client)))
    return ((queues.lambda1 - params.epsilon1) * press1
            + (queues.lambda2 - params.epsilon2) * press2
            + params.v_penalty * energy)


@dataclass(frozen=True)
class ClientContext:
    """Everything the per-client continuous subproblem needs.

    data_size is the dataset size the *solver* prices with; baselines may
    substitute a different value than the client's true size.
    """

    v_rate: float  # uplink rate on the assigned channel, bits/s
    weight_n: float  # aggregation weight within the candidate participant set
    theta_max: float
    data_size: float
    lambda2: float
    z_dim: int
    t_max: float
    tau_e: int
    gamma: float  # CPU cycles per sample
    alpha: float  # CPU energy coefficient
    f_min: float
    f_max: float
    tx_power: float
    q_last: int = 8

    @cached_property
    def cycles(self) -> float:
        return self.tau_e * self.gamma * self.data_size


def per_client_j3(f: float, q: float, ctx: ClientContext, params: LyapunovParams) -> float:
    """Quantization pressure + computation energy + level-dependent upload energy.

    This is the single function both the closed-form solver and the grid
    oracle minimize; q may be fractional here.
    """
    if ctx.v_rate <= 0:
        raise ValueError("client has no uplink rate; it cannot be priced")
    quant = ((ctx.lambda2 - params.epsilon2) * ctx.weight_n * ctx.z_dim
             * params.l_smooth * ctx.theta_max**2 / (8.0 * (2.0**q - 1.0) ** 2))
    cmp_energy = params.v_penalty * ctx.alpha * ctx.cycles * f**2
    com_energy = ctx.tx_power * params.v_penalty * ctx.z_dim * q / ctx.v_rate
    return quant + cmp_energy + com_energy


def j3_constant_terms(ctx: ClientContext, params: LyapunovParams) -> float:
    """Upload-energy share independent of (f, q): the sign bits and the range."""
    return ctx.tx_power * params.v_penalty * (ctx.z_dim + 32) / ctx.v_rate
