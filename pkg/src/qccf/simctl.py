"""Experiment orchestration: the seeded round loop, tracing, and sweeps.

A run is a pure function of (config, seed): every random draw comes from a
named substream, client results merge in fixed index order, and the trace
files are byte-identical across repetitions and worker counts.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fl_core
from .config import ExperimentConfig
from .lyapunov import (LyapunovParams, QueueState, arrival_lambda1,
                       arrival_lambda2, update_lambda1, update_lambda2)
from .policies import POLICIES, PrincipleSchedule, decide_principle
from .quantizer import quantize
from .rngs import substream
from .state import SystemState
from .wireless import ClientProfile, sample_channels
from .fl_core import EmptyRoundError

__all__ = ["RunResult", "RoundRecord", "run_experiment", "run_sweep",
           "write_trace", "write_summary", "TRACE_COLUMNS"]

TRACE_COLUMNS = ["n", "client_id", "a", "q", "f_hz", "channel", "t_cmp_s",
                 "t_com_s", "e_cmp_j", "e_com_j", "lambda1", "lambda2", "J",
                 "loss", "acc", "cum_energy_j"]

LATENCY_SLACK = 1e-9  # numerical tolerance when asserting the latency budget


@dataclass
class RoundRecord:
    n: int
    participation: np.ndarray
    quant_levels: np.ndarray
    frequencies: np.ndarray
    channel_of: np.ndarray
    t_cmp: np.ndarray
    t_com: np.ndarray
    e_cmp: np.ndarray
    e_com: np.ndarray
    lambda1: float
    lambda2: float
    arrival1: float
    arrival2: float
    objective: float
    loss: float
    acc: float
    cum_energy: float
    case_tags: list[str] = field(default_factory=list)

    @property
    def round_energy(self) -> float:
        return float(np.sum(self.participation * (self.e_cmp + self.e_com)))

    @property
    def mean_q_participants(self) -> float:
        mask = self.participation > 0
        return float(np.mean(self.quant_levels[mask])) if mask.any() else np.nan


@dataclass
class RunResult:
    cfg: ExperimentConfig
    records: list[RoundRecord]
    initial_loss: float
    initial_acc: float
    queue_init: tuple[float, float]
    sizes: np.ndarray
    distances: np.ndarray
    epsilon1: float
    epsilon2: float

    @property
    def total_energy(self) -> float:
        return self.records[-1].cum_energy if self.records else 0.0

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else self.initial_loss

    @property
    def final_acc(self) -> float:
        return self.records[-1].acc if self.records else self.initial_acc

    def per_client_mean_q(self) -> np.ndarray:
        """Mean solved level per client over its participating rounds."""
        u = len(self.sizes)
        sums = np.zeros(u)
        counts = np.zeros(u)
        for rec in self.records:
            mask = rec.participation > 0
            sums[mask] += rec.quant_levels[mask]
            counts[mask] += 1
        with np.errstate(invalid="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    def mean_q_series(self) -> np.ndarray:
        return np.array([rec.mean_q_participants for rec in self.records])


def _build_profiles(cfg: ExperimentConfig, sizes, distances) -> list[ClientProfile]:
    return [
        ClientProfile(
            data_size=int(d_size),
            distance_m=float(dist),
            cycles_per_sample=cfg.cycles_per_sample,
            energy_coeff=cfg.energy_coeff,
            f_min=cfg.f_min,
            f_max=cfg.f_max,
            local_epochs=cfg.local_epochs,
            local_updates=cfg.local_updates,
        )
        for d_size, dist in zip(sizes, distances)
    ]


def _make_decider(cfg: ExperimentConfig):
    if cfg.policy == "principle":
        schedule = PrincipleSchedule(cfg.principle_q_base, cfg.principle_q_span,
                                     cfg.principle_slope)
        return lambda st, rng: decide_principle(st, cfg.ga, rng, schedule)
    fn = POLICIES[cfg.policy]
    return lambda st, rng: fn(st, cfg.ga, rng)


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None,
                   verbose: bool = False) -> RunResult:
    """Run one seeded experiment; optionally persist trace.csv + summary.json."""
    seed = cfg.seed
    model = fl_core.LogisticModel(cfg.feature_dim, cfg.num_classes)
    clusters = fl_core.make_cluster_means(cfg.num_classes, cfg.feature_dim,
                                          cfg.cluster_separation, substream(seed, "clusters"))
    datasets = fl_core.partition_data(cfg.num_clients, cfg.size_mean, cfg.size_std,
                                      cfg.classes_per_client, substream(seed, "partition"),
                                      cluster_means=clusters)
    test = fl_core.make_test_set(clusters, cfg.test_size, substream(seed, "testset"))
    sizes = np.array([ds.size for ds in datasets], dtype=np.float64)
    distances = substream(seed, "profiles").uniform(cfg.distance_min_m, cfg.distance_max_m,
                                                    cfg.num_clients)
    profiles = _build_profiles(cfg, sizes, distances)
    weights_w = sizes / sizes.sum()
    batch_sizes = np.maximum(1, np.rint(sizes * cfg.local_epochs / cfg.local_updates)).astype(int)

    margin = cfg.mean_client_feasibility_margin()
    if margin < 0 and verbose:
        print(f"warning: latency budget infeasible for the mean client even at "
              f"(q=1, f_max); margin {margin:.4g} s", file=sys.stderr)

    theta = model.init_params()
    if model.num_params != cfg.z_dim:
        raise AssertionError("model dimension mismatch with config")

    # costing-free calibration pass: the server needs initial statistics
    stats_g = np.zeros(cfg.num_clients)
    stats_sigma2 = np.zeros(cfg.num_clients)
    stats_theta = np.zeros(cfg.num_clients)
    for i in range(cfg.num_clients):
        _, st = fl_core.local_update(model, theta, datasets[i], cfg.learning_rate,
                                     cfg.local_updates, int(batch_sizes[i]),
                                     substream(seed, f"client:{i}:round:0"))
        stats_g[i] = st.grad_norm_max
        stats_sigma2[i] = st.grad_variance
        stats_theta[i] = st.theta_max

    provisional = LyapunovParams(cfg.learning_rate, cfg.smoothness_l, cfg.local_updates,
                                 cfg.local_epochs, 0.0, 0.0, cfg.v_penalty)
    ref1 = arrival_lambda1(np.ones(cfg.num_clients), weights_w, weights_w,
                           stats_g**2, stats_sigma2, provisional)
    ref2 = arrival_lambda2(weights_w, np.full(cfg.num_clients, cfg.epsilon2_ref_q),
                           stats_theta, cfg.z_dim, provisional)
    eps1 = cfg.epsilon1 if cfg.epsilon1 is not None else cfg.epsilon1_scale * ref1
    eps2 = cfg.epsilon2 if cfg.epsilon2 is not None else cfg.epsilon2_scale * ref2
    params = LyapunovParams(cfg.learning_rate, cfg.smoothness_l, cfg.local_updates,
                            cfg.local_epochs, eps1, eps2, cfg.v_penalty)
    queues = QueueState(cfg.queue_init_factor * eps1, cfg.queue_init_factor * eps2)

    state = SystemState(
        round_index=0,
        total_rounds=cfg.rounds,
        gains=np.zeros((cfg.num_clients, cfg.wireless.num_channels)),
        profiles=profiles,
        stats_g=stats_g,
        stats_sigma2=stats_sigma2,
        stats_theta_max=stats_theta,
        q_last=np.full(cfg.num_clients, cfg.q_last_init, dtype=int),
        queues=queues,
        params=params,
        wireless=cfg.wireless,
        z_dim=cfg.z_dim,
        t_max=cfg.t_max,
        weights_w=weights_w,
    )
    decide = _make_decider(cfg)
    workers = int(os.environ.get("QCCF_WORKERS", "1"))

    initial_loss, initial_acc = fl_core.evaluate(model, theta, test)
    records: list[RoundRecord] = []
    cum_energy = 0.0

    for n in range(1, cfg.rounds + 1):
        state.round_index = n
        state.gains = sample_channels(cfg.wireless, profiles, substream(seed, f"channels:{n}"))
        decision = decide(state, substream(seed, f"ga:{n}"))
        decision.check_wireless_constraints()

        participants = [int(i) for i in np.flatnonzero(decision.participation)]
        rates = state.rate_matrix()
        channel_of = decision.channel_of

        t_cmp = np.zeros(cfg.num_clients)
        t_com = np.zeros(cfg.num_clients)
        e_cmp = np.zeros(cfg.num_clients)
        e_com = np.zeros(cfg.num_clients)
        for i in participants:
            prof, f_i = profiles[i], decision.frequencies[i]
            if not prof.f_min <= f_i <= prof.f_max * (1 + 1e-12):
                raise RuntimeError(f"round {n}: frequency box violated for client {i}")
            v_i = float(rates[i, channel_of[i]])
            t_cmp[i] = prof.cycles_per_epoch_set / f_i
            t_com[i] = decision.payloads[i] / v_i
            e_cmp[i] = prof.energy_coeff * prof.cycles_per_epoch_set * f_i**2
            e_com[i] = cfg.wireless.tx_power_w * t_com[i]
            if t_cmp[i] + t_com[i] > cfg.t_max + LATENCY_SLACK:
                raise RuntimeError(f"round {n}: latency budget violated for client {i}")

        def _one_update(i: int):
            return fl_core.local_update(model, theta, datasets[i], cfg.learning_rate,
                                        cfg.local_updates, int(batch_sizes[i]),
                                        substream(seed, f"client:{i}:round:{n}"))

        if workers > 1 and len(participants) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                updates = list(pool.map(_one_update, participants))
        else:
            updates = [_one_update(i) for i in participants]

        uploads = []
        fresh: dict[int, fl_core.LocalStats] = {}
        for i, (theta_i, st) in zip(participants, updates):
            fresh[i] = st
            if decision.quantize_uploads:
                uploads.append(quantize(theta_i, int(decision.quant_levels[i]),
                                        substream(seed, f"quant:{i}:round:{n}")))
            else:
                uploads.append(theta_i)

        if participants:
            try:
                theta = fl_core.aggregate(uploads, sizes[participants])
            except EmptyRoundError:  # pragma: no cover - participants nonempty
                pass
        loss, acc = fl_core.evaluate(model, theta, test)

        # queue updates use the decision-time estimates the objective priced
        arr1 = arrival_lambda1(decision.participation, weights_w, decision.weight_n,
                               state.stats_g**2, state.stats_sigma2, params)
        arr2 = arrival_lambda2(decision.weight_n, decision.quant_levels,
                               state.stats_theta_max, cfg.z_dim, params)
        queues.lambda1 = update_lambda1(queues, decision.participation, weights_w,
                                        decision.weight_n, state.stats_g**2,
                                        state.stats_sigma2, params)
        queues.lambda2 = update_lambda2(queues, decision.weight_n, decision.quant_levels,
                                        state.stats_theta_max, cfg.z_dim, params)

        for i, st in fresh.items():  # smoothed stats; the range is known exactly
            state.stats_g[i] = 0.5 * state.stats_g[i] + 0.5 * st.grad_norm_max
            state.stats_sigma2[i] = 0.5 * state.stats_sigma2[i] + 0.5 * st.grad_variance
            state.stats_theta_max[i] = st.theta_max
            state.q_last[i] = int(decision.quant_levels[i])

        cum_energy += float(np.sum(decision.participation * (e_cmp + e_com)))
        records.append(RoundRecord(
            n=n, participation=decision.participation.copy(),
            quant_levels=decision.quant_levels.copy(),
            frequencies=decision.frequencies.copy(), channel_of=channel_of,
            t_cmp=t_cmp, t_com=t_com, e_cmp=e_cmp, e_com=e_com,
            lambda1=queues.lambda1, lambda2=queues.lambda2,
            arrival1=arr1, arrival2=arr2, objective=decision.objective,
            loss=loss, acc=acc, cum_energy=cum_energy,
            case_tags=list(decision.case_tags),
        ))
        if verbose and n % 25 == 0:
            print(f"round {n:4d}  parts={len(participants)}  loss={loss:.4f} "
                  f"acc={acc:.3f}  l1={queues.lambda1:.3g} l2={queues.lambda2:.3g}",
                  file=sys.stderr)

    result = RunResult(cfg, records, initial_loss, initial_acc,
                       (cfg.queue_init_factor * eps1, cfg.queue_init_factor * eps2),
                       sizes, distances, eps1, eps2)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(result, out / "trace.csv")
        write_summary(result, out / "summary.json")
    return result


def _fmt(x) -> str:
    return repr(float(x))


def write_trace(result: RunResult, path) -> None:
    """Per-(round, client) CSV rows plus an initial evaluation row."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        l1_init, l2_init = result.queue_init
        wr.writerow([0, -1, 0, 0, _fmt(0), -1, _fmt(0), _fmt(0), _fmt(0), _fmt(0),
                     _fmt(l1_init), _fmt(l2_init), _fmt(0),
                     _fmt(result.initial_loss), _fmt(result.initial_acc), _fmt(0)])
        for rec in result.records:
            for i in range(len(rec.participation)):
                a = int(rec.participation[i])
                wr.writerow([
                    rec.n, i, a,
                    int(rec.quant_levels[i]) if a else 0,
                    _fmt(rec.frequencies[i] if a else 0.0),
                    int(rec.channel_of[i]),
                    _fmt(rec.t_cmp[i]), _fmt(rec.t_com[i]),
                    _fmt(rec.e_cmp[i]), _fmt(rec.e_com[i]),
                    _fmt(rec.lambda1), _fmt(rec.lambda2), _fmt(rec.objective),
                    _fmt(rec.loss), _fmt(rec.acc), _fmt(rec.cum_energy),
                ])


def write_summary(result: RunResult, path) -> None:
    recs = result.records
    case_hist: dict[str, int] = {}
    for rec in recs:
        for i, tag in enumerate(rec.case_tags):
            if rec.participation[i]:
                case_hist[tag] = case_hist.get(tag, 0) + 1
    summary = {
        "policy": result.cfg.policy,
        "seed": result.cfg.seed,
        "rounds": result.cfg.rounds,
        "v_penalty": result.cfg.v_penalty,
        "epsilon1": result.epsilon1,
        "epsilon2": result.epsilon2,
        "final_loss": result.final_loss,
        "final_acc": result.final_acc,
        "total_energy_j": result.total_energy,
        "lambda1_final": recs[-1].lambda1 if recs else result.queue_init[0],
        "lambda2_final": recs[-1].lambda2 if recs else result.queue_init[1],
        "arrival1_round1": recs[0].arrival1 if recs else None,
        "arrival2_round1": recs[0].arrival2 if recs else None,
        "participating_rounds": int(sum(1 for r in recs if r.participation.any())),
        "per_client_mean_q": [None if np.isnan(x) else x
                              for x in result.per_client_mean_q()],
        "client_sizes": result.sizes.tolist(),
        "case_histogram": case_hist,
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_sweep(cfg: ExperimentConfig, v_values, out_dir: str | None = None) -> list[dict]:
    """One experiment per penalty weight; returns the per-value summaries."""
    if not v_values:
        raise ValueError("empty sweep list")
    rows = []
    for v in v_values:
        sub = cfg.with_overrides(v_penalty=float(v))
        sub_dir = None if out_dir is None else str(Path(out_dir) / f"v_{v:g}")
        res = run_experiment(sub, out_dir=sub_dir)
        rows.append({"v_penalty": float(v), "final_acc": res.final_acc,
                     "final_loss": res.final_loss, "total_energy_j": res.total_energy})
    if out_dir is not None:
        with open(Path(out_dir) / "sweep.json", "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return rows
