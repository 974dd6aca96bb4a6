"""Channel generation and the uplink/computation cost models.

Channel gains combine a fixed device gain, log-distance path loss and
per-round Rician small-scale fading; they are resampled every round and
held constant within it.  All internal math is in linear SI units; dB and
dBm only appear at the config boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WirelessConfig",
    "ClientProfile",
    "NoChannelError",
    "db_to_linear",
    "dbm_per_hz_to_w_per_hz",
    "path_loss_gain",
    "rician_power",
    "sample_channels",
    "uplink_rate",
    "uplink_latency",
    "uplink_energy",
    "compute_latency",
    "compute_energy",
]


class NoChannelError(ValueError):
    """Raised when an unscheduled client (rate 0) is costed — a caller bug."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_per_hz_to_w_per_hz(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class WirelessConfig:
    """Uplink parameters; noise is stored in W/Hz after conversion at load."""

    bandwidth_hz: float = 1e6
    tx_power_w: float = 0.2
    noise_w_per_hz: float = dbm_per_hz_to_w_per_hz(-174.0)
    rician_k: float = 4.0
    rician_mean_power: float = 1.0
    device_gain_db: float = 15.0
    carrier_freq_hz: float = 2e9  # documentation only; the path-loss fit assumes ~2 GHz
    num_channels: int = 6

    def __post_init__(self):
        if self.bandwidth_hz <= 0 or self.tx_power_w <= 0 or self.noise_w_per_hz <= 0:
            raise ValueError("bandwidth, power and noise density must be positive")
        if self.num_channels < 1:
            raise ValueError("need at least one channel")


@dataclass(frozen=True)
class ClientProfile:
    """Static per-client compute/radio characteristics."""

    data_size: int
    distance_m: float
    cycles_per_sample: float = 1000.0
    energy_coeff: float = 1e-26
    f_min: float = 2e8
    f_max: float = 1e9
    local_epochs: int = 2
    local_updates: int = 6

    def __post_init__(self):
        if self.data_size < 1:
            raise ValueError("data_size must be >= 1")
        if not 0 < self.f_min <= self.f_max:
            raise ValueError("need 0 < f_min <= f_max")
        if self.local_updates % self.local_epochs != 0:
            raise ValueError("local_updates must be an integral multiple of local_epochs")

    @property
    def cycles_per_epoch_set(self) -> float:
        """CPU cycles for local_epochs passes over the local data."""
        return self.local_epochs * self.cycles_per_sample * self.data_size


def path_loss_gain(distance_m: float) -> float:
    """Linear power gain of the urban-macro log-distance model.

    PL(dB) = 128.1 + 37.6 log10(d/km); isolated here so it can be swapped.
    """
    pl_db = 128.1 + 37.6 * np.log10(distance_m / 1000.0)
    return 10.0 ** (-pl_db / 10.0)


def rician_power(k: float, mean_power: float, rng: np.random.Generator, size=None):
    """Sample |g|^2 with a LOS/NLOS power split of k/(k+1) vs 1/(k+1).

    g is complex Gaussian around a fixed LOS component, scaled so that
    E[|g|^2] = mean_power for any k.
    """
    los = np.sqrt(mean_power * k / (k + 1.0))
    scatter_std = np.sqrt(mean_power / (2.0 * (k + 1.0)))
    re = los + scatter_std * rng.standard_normal(size)
    im = scatter_std * rng.standard_normal(size)
    return re**2 + im**2


def sample_channels(
    cfg: WirelessConfig, profiles, rng: np.random.Generator
) -> np.ndarray:
    """Draw the (num_clients, num_channels) gain matrix for one round."""
    gains = np.empty((len(profiles), cfg.num_channels))
    device = db_to_linear(cfg.device_gain_db)
    for i, prof in enumerate(profiles):
        if prof.distance_m <= 0:
            raise ValueError("client distance must be positive")
        small = rician_power(cfg.rician_k, cfg.rician_mean_power, rng, cfg.num_channels)
        gains[i] = device * small * path_loss_gain(prof.distance_m)
    return gains


def uplink_rate(alloc_row: np.ndarray, gains_row: np.ndarray, cfg: WirelessConfig) -> float:
    """Shannon rate over the client's assigned channels; 0 if none assigned."""
    alloc_row = np.asarray(alloc_row, dtype=np.float64)
    snr = cfg.tx_power_w * np.asarray(gains_row) / (cfg.bandwidth_hz * cfg.noise_w_per_hz)
    return float(np.sum(alloc_row * cfg.bandwidth_hz * np.log2(1.0 + snr)))


def uplink_latency(payload_bits: float, rate: float) -> float:
    if payload_bits == 0:
        return 0.0
    if rate <= 0:
        raise NoChannelError("costing a client with no assigned channel")
    return payload_bits / rate


def uplink_energy(tx_power_w: float, latency_s: float) -> float:
    return tx_power_w * latency_s


def compute_latency(profile: ClientProfile, f: float) -> float:
    if not profile.f_min <= f <= profile.f_max:
        raise ValueError(f"frequency {f} outside [{profile.f_min}, {profile.f_max}]")
    return profile.cycles_per_epoch_set / f


def compute_energy(profile: ClientProfile, f: float) -> float:
    if not profile.f_min <= f <= profile.f_max:
        raise ValueError(f"frequency {f} outside [{profile.f_min}, {profile.f_max}]")
    return profile.energy_coeff * profile.cycles_per_epoch_set * f**2
