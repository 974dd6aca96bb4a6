"""Declarative experiment configuration: one INI file, validated at load."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .channel_ga import GaParams
from .wireless import WirelessConfig, dbm_per_hz_to_w_per_hz, db_to_linear, path_loss_gain

__all__ = ["ExperimentConfig", "load_config", "parse_config_text", "DEFAULT_CONFIG"]


@dataclass(frozen=True)
class ExperimentConfig:
    # run
    policy: str = "qccf"
    rounds: int = 200
    seed: int = 1
    output: str = "runs/latest"
    # wireless
    wireless: WirelessConfig = field(default_factory=WirelessConfig)
    # clients
    num_clients: int = 10
    f_min: float = 2e8
    f_max: float = 1e9
    cycles_per_sample: float = 1000.0
    energy_coeff: float = 1e-26
    local_updates: int = 6
    local_epochs: int = 2
    distance_min_m: float = 1900.0
    distance_max_m: float = 2100.0
    t_max: float = 0.05
    # data
    size_mean: float = 1200.0
    size_std: float = 300.0
    num_classes: int = 10
    classes_per_client: int = 3
    feature_dim: int = 800
    cluster_separation: float = 0.12
    test_size: int = 2000
    # training
    learning_rate: float = 0.05
    smoothness_l: float = 1.0
    # lyapunov
    v_penalty: float = 50.0
    epsilon1: float | None = None  # None -> auto-calibrated at startup
    epsilon2: float | None = None
    epsilon1_scale: float = 0.35
    epsilon2_scale: float = 0.9
    epsilon2_ref_q: int = 5
    queue_init_factor: float = 2.0
    q_last_init: int = 8
    # ga
    ga: GaParams = field(default_factory=lambda: GaParams(
        generations=40, mutation_prob=0.1))
    # principle baseline
    principle_q_base: float = 2.0
    principle_q_span: float = 8.0
    principle_slope: float = 1.0
    # sweep
    v_values: tuple = ()

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.policy not in ("qccf", "no_quant", "channel_allocate", "principle", "same_size"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.classes_per_client > self.num_classes:
            raise ValueError("classes_per_client exceeds num_classes")
        if self.local_updates % self.local_epochs != 0:
            raise ValueError("local_updates must be a multiple of local_epochs")
        premise = 2.0 * self.learning_rate**2 * self.local_updates**2 * self.smoothness_l**2
        if premise >= 1.0:
            raise ValueError(f"contraction premise violated: 2*eta^2*tau^2*L^2 = {premise:.4g} >= 1")
        if not 0 < self.distance_min_m <= self.distance_max_m:
            raise ValueError("bad distance range")

    @property
    def z_dim(self) -> int:
        return self.num_classes * self.feature_dim + self.num_classes

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def mean_client_feasibility_margin(self) -> float:
        """Latency slack for the mean client at the lowest level and top frequency.

        Negative means even the cheapest upload cannot fit, which merits a
        startup warning (the run would schedule nobody).
        """
        mean_d = 0.5 * (self.distance_min_m + self.distance_max_m)
        gain = (db_to_linear(self.wireless.device_gain_db)
                * self.wireless.rician_mean_power * path_loss_gain(mean_d))
        snr = self.wireless.tx_power_w * gain / (self.wireless.bandwidth_hz
                                                 * self.wireless.noise_w_per_hz)
        v = self.wireless.bandwidth_hz * np.log2(1.0 + snr)
        cycles = self.local_epochs * self.cycles_per_sample * self.size_mean
        latency = cycles / self.f_max + (2 * self.z_dim + 32) / v
        return self.t_max - float(latency)


def _get(cp, section, key, conv, default):
    if cp.has_option(section, key):
        raw = cp.get(section, key)
        if conv is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return conv(raw)
    return default


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_file(io.StringIO(text))
    base = ExperimentConfig()

    wireless = WirelessConfig(
        bandwidth_hz=_get(cp, "wireless", "bandwidth_hz", float, base.wireless.bandwidth_hz),
        tx_power_w=_get(cp, "wireless", "tx_power_w", float, base.wireless.tx_power_w),
        noise_w_per_hz=dbm_per_hz_to_w_per_hz(
            _get(cp, "wireless", "noise_dbm_per_hz", float, -174.0)),
        rician_k=_get(cp, "wireless", "rician_k", float, base.wireless.rician_k),
        rician_mean_power=_get(cp, "wireless", "rician_mean_power", float,
                               base.wireless.rician_mean_power),
        device_gain_db=_get(cp, "wireless", "device_gain_db", float,
                            base.wireless.device_gain_db),
        carrier_freq_hz=_get(cp, "wireless", "carrier_freq_hz", float,
                             base.wireless.carrier_freq_hz),
        num_channels=_get(cp, "wireless", "num_channels", int, base.wireless.num_channels),
    )
    ga = GaParams(
        population=_get(cp, "ga", "population", int, base.ga.population),
        generations=_get(cp, "ga", "generations", int, base.ga.generations),
        crossover_prob=_get(cp, "ga", "crossover_prob", float, base.ga.crossover_prob),
        mutation_prob=_get(cp, "ga", "mutation_prob", float, base.ga.mutation_prob),
        fitness_exponent=_get(cp, "ga", "fitness_exponent", float, base.ga.fitness_exponent),
    )

    def opt_float(section, key):
        if cp.has_option(section, key) and cp.get(section, key).strip().lower() not in ("auto", ""):
            return float(cp.get(section, key))
        return None

    v_raw = _get(cp, "sweep", "v_values", str, "")
    v_values = tuple(float(tok) for tok in v_raw.replace(",", " ").split()) if v_raw else ()

    return ExperimentConfig(
        policy=_get(cp, "run", "policy", str, base.policy).strip(),
        rounds=_get(cp, "run", "rounds", int, base.rounds),
        seed=_get(cp, "run", "seed", int, base.seed),
        output=_get(cp, "run", "output", str, base.output).strip(),
        wireless=wireless,
        num_clients=_get(cp, "clients", "num_clients", int, base.num_clients),
        f_min=_get(cp, "clients", "f_min_hz", float, base.f_min),
        f_max=_get(cp, "clients", "f_max_hz", float, base.f_max),
        cycles_per_sample=_get(cp, "clients", "cycles_per_sample", float, base.cycles_per_sample),
        energy_coeff=_get(cp, "clients", "energy_coeff", float, base.energy_coeff),
        local_updates=_get(cp, "clients", "local_updates", int, base.local_updates),
        local_epochs=_get(cp, "clients", "local_epochs", int, base.local_epochs),
        distance_min_m=_get(cp, "clients", "distance_min_m", float, base.distance_min_m),
        distance_max_m=_get(cp, "clients", "distance_max_m", float, base.distance_max_m),
        t_max=_get(cp, "clients", "t_max_s", float, base.t_max),
        size_mean=_get(cp, "data", "size_mean", float, base.size_mean),
        size_std=_get(cp, "data", "size_std", float, base.size_std),
        num_classes=_get(cp, "data", "num_classes", int, base.num_classes),
        classes_per_client=_get(cp, "data", "classes_per_client", int, base.classes_per_client),
        feature_dim=_get(cp, "data", "feature_dim", int, base.feature_dim),
        cluster_separation=_get(cp, "data", "cluster_separation", float, base.cluster_separation),
        test_size=_get(cp, "data", "test_size", int, base.test_size),
        learning_rate=_get(cp, "training", "learning_rate", float, base.learning_rate),
        smoothness_l=_get(cp, "training", "smoothness_l", float, base.smoothness_l),
        v_penalty=_get(cp, "lyapunov", "v_penalty", float, base.v_penalty),
        epsilon1=opt_float("lyapunov", "epsilon1"),
        epsilon2=opt_float("lyapunov", "epsilon2"),
        epsilon1_scale=_get(cp, "lyapunov", "epsilon1_scale", float, base.epsilon1_scale),
        epsilon2_scale=_get(cp, "lyapunov", "epsilon2_scale", float, base.epsilon2_scale),
        epsilon2_ref_q=_get(cp, "lyapunov", "epsilon2_ref_q", int, base.epsilon2_ref_q),
        queue_init_factor=_get(cp, "lyapunov", "queue_init_factor", float, base.queue_init_factor),
        q_last_init=_get(cp, "lyapunov", "q_last_init", int, base.q_last_init),
        ga=ga,
        principle_q_base=_get(cp, "principle", "q_base", float, base.principle_q_base),
        principle_q_span=_get(cp, "principle", "q_span", float, base.principle_q_span),
        principle_slope=_get(cp, "principle", "slope", float, base.principle_slope),
        v_values=v_values,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


DEFAULT_CONFIG = """\
# Desk-scale experiment defaults.  Radio constants follow the standard
# cellular setup (1 MHz channels, 0.2 W uplink, -174 dBm/Hz noise, Rician
# K=4 fading); the model is a 10-class logistic regressor on 800 synthetic
# features (8010 parameters), with the latency budget set so levels 1..16
# span the feasible/infeasible boundary for typical clients.

[run]
policy = qccf
rounds = 200
seed = 1
output = runs/desk

[wireless]
bandwidth_hz = 1e6
tx_power_w = 0.2
noise_dbm_per_hz = -174
rician_k = 4
rician_mean_power = 1
device_gain_db = 15
carrier_freq_hz = 2e9
num_channels = 6

[clients]
num_clients = 10
f_min_hz = 2e8
f_max_hz = 1e9
cycles_per_sample = 1000
energy_coeff = 1e-26
local_updates = 6
local_epochs = 2
distance_min_m = 1900
distance_max_m = 2100
t_max_s = 0.05

[data]
size_mean = 1200
size_std = 300
num_classes = 10
classes_per_client = 3
feature_dim = 800
cluster_separation = 0.12
test_size = 2000

[training]
learning_rate = 0.05
smoothness_l = 1.0

[lyapunov]
v_penalty = 50
epsilon1 = auto
epsilon2 = auto
epsilon1_scale = 0.35
epsilon2_scale = 0.9
epsilon2_ref_q = 5
queue_init_factor = 2.0
q_last_init = 8

[ga]
population = 40
generations = 40
crossover_prob = 0.8
mutation_prob = 0.1
fitness_exponent = 2.0

[principle]
q_base = 2
q_span = 8
slope = 1.0

[sweep]
v_values = 10 50 200
"""
