"""Calibration sweep for the trend/energy acceptance criteria (scratch)."""
import sys
import time

import numpy as np
from scipy import stats

from qccf.config import ExperimentConfig
from qccf.simctl import run_experiment

SEEDS = [1, 2, 3]
ROUNDS = 150


def trend_stats(res):
    xs, ys = [], []
    for rec in res.records:
        if rec.participation.any():
            xs.append(rec.n)
            ys.append(rec.mean_q_participants)
    rho_n = stats.spearmanr(xs, ys).statistic if len(xs) > 2 else np.nan
    mean_q = res.per_client_mean_q()
    mask = ~np.isnan(mean_q)
    rho_d = (stats.spearmanr(res.sizes[mask], mean_q[mask]).statistic
             if mask.sum() > 2 else np.nan)
    return rho_n, rho_d


def main():
    rows = {}
    for beta in (300.0, 150.0):
        for policy in ("qccf", "principle", "same_size"):
            if beta == 150.0 and policy == "principle":
                continue
            accs, energies, rhons, rhods, alive = [], [], [], [], []
            for seed in SEEDS:
                t0 = time.time()
                cfg = ExperimentConfig(policy=policy, rounds=ROUNDS, seed=seed,
                                       size_std=beta)
                res = run_experiment(cfg)
                rn, rd = trend_stats(res)
                accs.append(res.final_acc)
                energies.append(res.total_energy)
                rhons.append(rn)
                rhods.append(rd)
                alive.append(sum(1 for r in res.records if r.participation.any()))
                print(f"  beta={beta:.0f} {policy} seed={seed}: acc={res.final_acc:.3f} "
                      f"E={res.total_energy:.4g} rho_n={rn:.2f} rho_D={rd:.2f} "
                      f"alive={alive[-1]} ({time.time()-t0:.0f}s)", flush=True)
            rows[(beta, policy)] = dict(acc=np.mean(accs), e=np.mean(energies),
                                        rho_n=np.nanmean(rhons), rho_d=np.nanmean(rhods))
    print("\nsummary:")
    for k, v in rows.items():
        print(k, {kk: round(float(vv), 4) for kk, vv in v.items()})
    q3, p3, s3 = rows[(300.0, "qccf")], rows[(300.0, "principle")], rows[(300.0, "same_size")]
    q1, s1 = rows[(150.0, "qccf")], rows[(150.0, "same_size")]
    print("\ncrit6 rho_n>=0.5:", q3["rho_n"])
    print("crit7 rho_D<=-0.5:", q3["rho_d"])
    print("crit8 E ratio vs min(principle, same_size):",
          q3["e"] / min(p3["e"], s3["e"]), " acc gaps:",
          q3["acc"] - p3["acc"], q3["acc"] - s3["acc"])
    print("crit9 qccf delta:", abs(q3["e"] - q1["e"]) / q1["e"],
          " same_size delta:", (s3["e"] - s1["e"]) / s1["e"])


if __name__ == "__main__":
    sys.exit(main())
