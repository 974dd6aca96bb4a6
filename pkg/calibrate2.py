"""Second calibration pass: latency-tight desk regimes (scratch)."""
import sys
import time

import numpy as np
from scipy import stats

from qccf.config import ExperimentConfig
from qccf.simctl import run_experiment

ROUNDS = 150
SEEDS = [1, 2]

VARIANTS = {
    "A: tmax.05 d2.7-3.3 ref6": dict(t_max=0.05, distance_min_m=2700, distance_max_m=3300,
                                     epsilon2_ref_q=6),
    "B: tmax.03 d2.7-3.3 ref3": dict(t_max=0.03, distance_min_m=2700, distance_max_m=3300,
                                     epsilon2_ref_q=3),
}


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


def run_cell(policy, beta, over):
    accs, es, rns, rds, alive, l2r = [], [], [], [], [], []
    for seed in SEEDS:
        cfg = ExperimentConfig(policy=policy, rounds=ROUNDS, seed=seed,
                               size_std=beta, **over)
        res = run_experiment(cfg)
        rn, rd = trend_stats(res)
        accs.append(res.final_acc); es.append(res.total_energy)
        rns.append(rn); rds.append(rd)
        alive.append(sum(1 for r in res.records if r.participation.any()))
        l2r.append(res.records[-1].lambda2 / ROUNDS / max(res.records[0].arrival2, 1e-30))
    return dict(acc=float(np.mean(accs)), e=float(np.mean(es)),
                rho_n=float(np.nanmean(rns)), rho_d=float(np.nanmean(rds)),
                alive=float(np.mean(alive)), l2_ratio=float(np.mean(l2r)))


def main():
    for name, over in VARIANTS.items():
        print(f"== {name}")
        t0 = time.time()
        cells = {}
        for beta, policy in [(300, "qccf"), (300, "principle"), (300, "same_size"),
                             (150, "qccf"), (150, "same_size")]:
            cells[(beta, policy)] = run_cell(policy, beta, over)
            print(f"   b={beta} {policy}: {cells[(beta, policy)]}", flush=True)
        q3, p3, s3 = cells[(300, "qccf")], cells[(300, "principle")], cells[(300, "same_size")]
        q1, s1 = cells[(150, "qccf")], cells[(150, "same_size")]
        print(f"  crit6 rho_n: {q3['rho_n']:.3f} (need >= .5)")
        print(f"  crit7 rho_D: {q3['rho_d']:.3f} (need <= -.5)")
        print(f"  crit8 ratio: {q3['e']/min(p3['e'], s3['e']):.3f} (need <= .85); "
              f"acc gaps {q3['acc']-p3['acc']:+.3f} {q3['acc']-s3['acc']:+.3f} (|.|<=.02)")
        print(f"  crit9 qccf d: {abs(q3['e']-q1['e'])/q1['e']:.3f} (<.10); "
              f"same_size d: {(s3['e']-s1['e'])/s1['e']:.3f} (>.10)")
        print(f"  lambda2 final ratio: {q3['l2_ratio']:.4g} (<0.01)  [{time.time()-t0:.0f}s]")


if __name__ == "__main__":
    sys.exit(main())
