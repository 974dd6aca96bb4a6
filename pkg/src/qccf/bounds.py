"""Evaluators for the convergence-analysis quantities, plus a toy validation harness.

theorem_round_rhs prices a finished run: loss descent, accumulated
quantization error, mini-batch variance and gradient-bound terms, and the
participation miss.  The toy harness materializes the virtual aggregate of
the local models mid-round (never needed at runtime) on a tiny quadratic
problem, so both the per-update drift lemma and the summed round bound can
be checked against measured quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantizer import dequantize, quantize
from .rngs import substream

__all__ = [
    "BoundInputs",
    "theorem_round_rhs",
    "lemma2_rhs",
    "ToyConfig",
    "ToyProblem",
    "run_toy_seed",
    "measure_smoothness",
    "validate_bounds",
]


@dataclass
class BoundInputs:
    """Aggregates of one run, arrays shaped (rounds, clients)."""

    eta: float
    l_smooth: float
    tau: int
    z_dim: int
    f_initial: float
    f_final: float
    weights_w: np.ndarray  # (U,) global size weights
    participation: np.ndarray  # (N, U)
    weight_n: np.ndarray  # (N, U)
    g_bound: np.ndarray  # (N, U)
    sigma_sq: np.ndarray  # (N, U)
    theta_max: np.ndarray  # (N, U)
    q_levels: np.ndarray  # (N, U)

    def __post_init__(self):
        if 2.0 * self.eta**2 * self.tau**2 * self.l_smooth**2 >= 1.0:
            raise ValueError("contraction premise violated: 2*eta^2*tau^2*L^2 >= 1")


def theorem_round_rhs(inputs: BoundInputs) -> float:
    """Upper bound on the summed squared gradients of the virtual aggregate."""
    eta, big_l, tau = inputs.eta, inputs.l_smooth, inputs.tau
    wn = inputs.weight_n
    g_sq = inputs.g_bound**2

    descent = 2.0 / eta * (inputs.f_initial - inputs.f_final)
    quant = (big_l / 2.0) * float(np.sum(
        wn * inputs.z_dim * inputs.theta_max**2
        / (4.0 * (2.0**inputs.q_levels - 1.0) ** 2)))
    var_lin = eta * big_l * tau * float(np.sum(wn * inputs.sigma_sq))
    denom = 1.0 - 2.0 * eta**2 * tau**2 * big_l**2
    var_quad = eta**2 * big_l**2 * float(np.sum(
        (tau**2 - tau) * (wn * inputs.sigma_sq).sum(axis=1)
        + (2.0 / 3.0) * (2 * tau**3 - 3 * tau**2 + tau) * (wn * g_sq).sum(axis=1)
    )) / denom
    miss = 4.0 * tau * float(np.sum((1.0 - inputs.participation * inputs.weights_w) * g_sq))
    return descent + quant + var_lin + var_quad + miss


def lemma2_rhs(m: int, weight_n, sigma_sq, g_bound, eta: float, l_smooth: float) -> float:
    """Bound on the weighted dispersion of local models after m updates."""
    denom = 1.0 - 2.0 * eta**2 * m**2 * l_smooth**2
    if denom <= 0:
        raise ValueError("contraction premise violated for this m")
    wn = np.asarray(weight_n)
    num = (eta**2 * m * float(np.sum(wn * sigma_sq))
           + 2.0 * eta**2 * m**2 * float(np.sum(wn * np.asarray(g_bound) ** 2)))
    return num / denom


@dataclass(frozen=True)
class ToyConfig:
    num_clients: int = 3
    z_dim: int = 8
    tau: int = 4
    rounds: int = 3
    eta: float = 0.1
    q_level: int = 4
    samples_per_client: int = 12
    batch: int = 4
    center_spread: float = 1.0
    data_seed: int = 1234


class ToyProblem:
    """Per-sample quadratic losses: client i holds targets c_ij and pays
    0.5*||theta - c_ij||^2 per sample, so every analysis constant is exact
    (smoothness 1, mini-batch variance tr(cov)/batch at any parameter)."""

    def __init__(self, cfg: ToyConfig):
        rng = np.random.default_rng(cfg.data_seed)
        self.cfg = cfg
        self.centers = [cfg.center_spread * rng.standard_normal((cfg.samples_per_client, cfg.z_dim))
                        for _ in range(cfg.num_clients)]
        sizes = np.full(cfg.num_clients, cfg.samples_per_client, dtype=float)
        self.weights = sizes / sizes.sum()
        self.client_means = np.stack([c.mean(axis=0) for c in self.centers])
        self.global_mean = (self.weights[:, None] * self.client_means).sum(axis=0)

    def client_grad(self, i: int, theta: np.ndarray) -> np.ndarray:
        return theta - self.client_means[i]

    def global_grad(self, theta: np.ndarray) -> np.ndarray:
        return theta - self.global_mean

    def global_loss(self, theta: np.ndarray) -> float:
        total = 0.0
        for w, c in zip(self.weights, self.centers):
            d = theta[None, :] - c
            total += w * 0.5 * float(np.mean(np.sum(d**2, axis=1)))
        return total

    def exact_sigma_sq(self) -> np.ndarray:
        """Mini-batch gradient variance: with-replacement batches of size b."""
        out = np.empty(self.cfg.num_clients)
        for i, c in enumerate(self.centers):
            centered = c - c.mean(axis=0)
            out[i] = float(np.sum(centered**2) / len(c)) / self.cfg.batch
        return out


@dataclass
class ToySeedRecord:
    f_initial: float
    f_final: float
    lhs_grad_sum: float
    quant_term: float  # accumulated sum w_n * Z theta_max^2 / (4 (2^q-1)^2)
    dispersion: np.ndarray  # (rounds, tau+1) weighted model dispersion per update
    grad_norms: np.ndarray  # (rounds, clients) max gradient norm seen that round
    theta_max: np.ndarray = field(default=None)  # (rounds, clients)


def run_toy_seed(problem: ToyProblem, seed: int) -> ToySeedRecord:
    """One full-participation toy run, recording the mid-round aggregates."""
    cfg = problem.cfg
    rng = substream(seed, "toy")
    theta_global = np.zeros(cfg.z_dim)
    f_initial = problem.global_loss(theta_global)

    dispersion = np.zeros((cfg.rounds, cfg.tau + 1))
    grad_norms = np.zeros((cfg.rounds, cfg.num_clients))
    theta_max = np.zeros((cfg.rounds, cfg.num_clients))
    lhs = 0.0
    quant_term = 0.0

    for n in range(cfg.rounds):
        locals_ = [theta_global.copy() for _ in range(cfg.num_clients)]
        psi0 = theta_global.copy()
        for m in range(cfg.tau + 1):
            psi = np.zeros(cfg.z_dim)
            for i, th in enumerate(locals_):
                psi += problem.weights[i] * th
                dispersion[n, m] += problem.weights[i] * float(np.sum((th - psi0) ** 2))
                grad_norms[n, i] = max(grad_norms[n, i],
                                       float(np.linalg.norm(problem.client_grad(i, th))))
            for i in range(cfg.num_clients):
                grad_norms[n, i] = max(grad_norms[n, i],
                                       float(np.linalg.norm(problem.client_grad(i, psi))))
            if m < cfg.tau:
                lhs += float(np.sum(problem.global_grad(psi) ** 2))
                for i in range(cfg.num_clients):
                    idx = rng.integers(0, cfg.samples_per_client, size=cfg.batch)
                    g = locals_[i] - problem.centers[i][idx].mean(axis=0)
                    locals_[i] = locals_[i] - cfg.eta * g

        uploads = []
        for i, th in enumerate(locals_):
            theta_max[n, i] = float(np.max(np.abs(th)))
            uploads.append(dequantize(quantize(th, cfg.q_level, rng)))
            quant_term += (problem.weights[i] * cfg.z_dim * theta_max[n, i] ** 2
                           / (4.0 * (2**cfg.q_level - 1) ** 2))
        theta_global = np.zeros(cfg.z_dim)
        for w, up in zip(problem.weights, uploads):
            theta_global += w * up

    return ToySeedRecord(f_initial, problem.global_loss(theta_global), lhs,
                         quant_term, dispersion, grad_norms, theta_max)


def measure_smoothness(problem: ToyProblem, num_pairs: int = 200, seed: int = 7) -> float:
    """Largest gradient-difference ratio over sampled parameter pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_pairs):
        a = rng.standard_normal(problem.cfg.z_dim)
        b = rng.standard_normal(problem.cfg.z_dim)
        gap = float(np.linalg.norm(a - b))
        if gap == 0.0:
            continue
        for i in range(problem.cfg.num_clients):
            diff = float(np.linalg.norm(problem.client_grad(i, a) - problem.client_grad(i, b)))
            worst = max(worst, diff / gap)
    return worst


def validate_bounds(num_seeds: int = 1000, cfg: ToyConfig | None = None,
                    slack: float = 1.05) -> dict:
    """Run the toy ensemble and compare measured quantities to the bounds.

    Returns a JSON-ready report; 'theorem_ok' and 'lemma_ok' are the verdicts.
    """
    cfg = cfg or ToyConfig()
    problem = ToyProblem(cfg)
    big_l = measure_smoothness(problem)
    sigma_sq = problem.exact_sigma_sq()

    records = [run_toy_seed(problem, s) for s in range(num_seeds)]
    g_round = np.max(np.stack([r.grad_norms for r in records]), axis=0)  # (N, U) ensemble bound

    # drift lemma: mean dispersion at every update count vs its bound
    mean_disp = np.mean(np.stack([r.dispersion for r in records]), axis=0)
    lemma_ok = True
    lemma_rows = []
    for n in range(cfg.rounds):
        for m in range(cfg.tau + 1):
            rhs = lemma2_rhs(m, problem.weights, sigma_sq, g_round[n], cfg.eta, big_l)
            lhs = float(mean_disp[n, m])
            lemma_rows.append({"round": n + 1, "m": m, "lhs": lhs, "rhs": rhs})
            lemma_ok &= lhs <= rhs * slack + 1e-15

    # round theorem: mean summed gradient norms vs the mean assembled bound
    mean_lhs = float(np.mean([r.lhs_grad_sum for r in records]))
    rhs_values = []
    for r in records:
        inputs = BoundInputs(
            eta=cfg.eta, l_smooth=big_l, tau=cfg.tau, z_dim=cfg.z_dim,
            f_initial=r.f_initial, f_final=r.f_final,
            weights_w=problem.weights,
            participation=np.ones((cfg.rounds, cfg.num_clients)),
            weight_n=np.tile(problem.weights, (cfg.rounds, 1)),
            g_bound=g_round,
            sigma_sq=np.tile(sigma_sq, (cfg.rounds, 1)),
            theta_max=r.theta_max,
            q_levels=np.full((cfg.rounds, cfg.num_clients), cfg.q_level, dtype=float),
        )
        rhs_values.append(theorem_round_rhs(inputs))
    mean_rhs = float(np.mean(rhs_values))

    return {
        "seeds": num_seeds,
        "smoothness_measured": big_l,
        "theorem_lhs": mean_lhs,
        "theorem_rhs": mean_rhs,
        "theorem_ok": mean_lhs <= mean_rhs * slack,
        "lemma_ok": lemma_ok,
        "lemma_rows": lemma_rows,
    }
