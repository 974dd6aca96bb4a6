"""Shared containers: the server's per-round view and the decision it emits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lyapunov import LyapunovParams, QueueState
from .wireless import ClientProfile, WirelessConfig

__all__ = ["SystemState", "RoundDecision"]


@dataclass
class SystemState:
    """Everything the server knows when it makes a round's decision.

    Stats arrays hold the serverside estimates (smoothed across the rounds a
    client participated in); q_last remembers each client's last solved level
    as the anchor for the interior-case update.
    """

    round_index: int
    total_rounds: int
    gains: np.ndarray  # (U, C) linear power gains, resampled per round
    profiles: list[ClientProfile]
    stats_g: np.ndarray  # (U,) gradient-norm bounds
    stats_sigma2: np.ndarray  # (U,) mini-batch variances
    stats_theta_max: np.ndarray  # (U,)
    q_last: np.ndarray  # (U,) int
    queues: QueueState
    params: LyapunovParams
    wireless: WirelessConfig
    z_dim: int
    t_max: float
    weights_w: np.ndarray = field(default=None)  # (U,) global size weights

    def __post_init__(self):
        if self.weights_w is None:
            sizes = np.array([p.data_size for p in self.profiles], dtype=np.float64)
            self.weights_w = sizes / sizes.sum()

    @property
    def num_clients(self) -> int:
        return len(self.profiles)

    @property
    def num_channels(self) -> int:
        return self.gains.shape[1]

    def rate_matrix(self) -> np.ndarray:
        """Single-channel uplink rates for every (client, channel) pair."""
        cfg = self.wireless
        snr = cfg.tx_power_w * self.gains / (cfg.bandwidth_hz * cfg.noise_w_per_hz)
        return cfg.bandwidth_hz * np.log2(1.0 + snr)


@dataclass
class RoundDecision:
    """One round's control variables plus solver diagnostics.

    Entries of frequencies/quant_levels/payloads for unscheduled clients are
    ignored by costing.  weight_n holds the true-size participant weights of
    the chosen set (used for aggregation and queue updates).
    """

    participation: np.ndarray  # (U,) 0/1
    allocation: np.ndarray  # (C, U) 0/1
    frequencies: np.ndarray  # (U,) Hz
    quant_levels: np.ndarray  # (U,) int >= 1
    payloads: np.ndarray  # (U,) uplink bits
    weight_n: np.ndarray  # (U,)
    case_tags: list[str]
    j3_values: np.ndarray
    objective: float
    quantize_uploads: bool = True

    @property
    def channel_of(self) -> np.ndarray:
        """Assigned channel per client, -1 when unscheduled."""
        out = np.full(self.participation.shape[0], -1, dtype=int)
        ch, cl = np.nonzero(self.allocation)
        out[cl] = ch
        return out

    def check_wireless_constraints(self):
        """Participation/allocation consistency: the combinatorial feasibility rules."""
        col = self.allocation.sum(axis=0)
        if not np.array_equal(col, self.participation):
            raise ValueError("each participant needs exactly one channel")
        if (self.allocation.sum(axis=1) > 1).any():
            raise ValueError("a channel is shared by more than one client")
        if not set(np.unique(self.allocation)) <= {0, 1}:
            raise ValueError("allocation entries must be 0/1")
