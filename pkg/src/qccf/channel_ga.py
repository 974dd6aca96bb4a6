"""Genetic search over channel-to-client assignments.

A chromosome is one gene per channel holding the client that channel serves
(or -1 for unused), which encodes the one-channel-per-client rule by
construction after repair.  Fitness ranks chromosomes by how far their
objective sits below the generation's worst, and an elite copy of the best
assignment ever seen survives every generation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaParams",
    "InnerResult",
    "ChromEval",
    "ChromosomeEvaluator",
    "fitness_value",
    "repair",
    "random_chromosome",
    "crossover",
    "mutate",
    "ga_allocate",
    "exhaustive_allocate",
]

FREE = -1  # gene value for an unassigned channel


@dataclass(frozen=True)
class GaParams:
    population: int = 40
    generations: int = 60
    crossover_prob: float = 0.8
    mutation_prob: float = 0.2
    fitness_exponent: float = 2.0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.fitness_exponent <= 0:
            raise ValueError("fitness_exponent must be positive")


@dataclass(frozen=True)
class InnerResult:
    """Per-client inner solution for one candidate assignment."""

    feasible: bool
    q: int
    f: float
    payload: float
    e_cmp: float
    e_com: float
    case: str
    j3: float

    @staticmethod
    def infeasible() -> "InnerResult":
        return InnerResult(False, 0, math.nan, 0.0, 0.0, 0.0, "infeasible", math.inf)


@dataclass
class ChromEval:
    feasible: bool
    objective: float
    chrom: np.ndarray
    inner: dict  # client -> InnerResult
    participants: list
    weight_n: dict  # client -> solver-facing participant weight


class ChromosomeEvaluator:
    """Prices chromosomes: inner per-client solves plus the round objective.

    inner_fn(client, rate, weight_n) -> InnerResult is memoized on the
    (client, channel, participant-set total size) triple, which is all it can
    depend on within one round.  objective_fn(participants, weight_n,
    inner_map) -> float assembles the scalar the GA minimizes.
    """

    def __init__(self, rates: np.ndarray, sizes_solver: np.ndarray, inner_fn, objective_fn):
        self.rates = rates
        self.sizes_solver = [float(s) for s in sizes_solver]
        self.inner_fn = inner_fn
        self.objective_fn = objective_fn
        self.num_clients = rates.shape[0]
        self._inner_cache: dict = {}
        self._eval_cache: dict = {}

    def evaluate(self, chrom: np.ndarray) -> ChromEval:
        key = chrom.tobytes()
        hit = self._eval_cache.get(key)
        if hit is not None:
            return hit

        assigned = [(int(cl), ch) for ch, cl in enumerate(chrom) if cl != FREE]
        participants = [cl for cl, _ in assigned]
        total = sum(self.sizes_solver[cl] for cl in participants)
        weight_n = ({cl: self.sizes_solver[cl] / total for cl in participants}
                    if total > 0 else {})

        inner: dict[int, InnerResult] = {}
        feasible = True
        for cl, ch in assigned:
            ckey = (cl, ch, total)
            res = self._inner_cache.get(ckey)
            if res is None:
                res = self.inner_fn(cl, float(self.rates[cl, ch]), weight_n[cl])
                self._inner_cache[ckey] = res
            inner[cl] = res
            feasible &= res.feasible

        objective = (self.objective_fn(participants, weight_n, inner)
                     if feasible else math.inf)
        out = ChromEval(feasible, objective, chrom.copy(), inner, participants, weight_n)
        self._eval_cache[key] = out
        return out


def fitness_value(objective: float, j_max: float, exponent: float) -> float:
    """Spread below the generation's worst objective, raised to the exponent."""
    return max(j_max - objective, 0.0) ** exponent


def repair(chrom: np.ndarray) -> np.ndarray:
    """Free any channel whose client already holds an earlier one."""
    seen = set()
    for ch, cl in enumerate(chrom):
        if cl == FREE:
            continue
        if cl in seen:
            chrom[ch] = FREE
        else:
            seen.add(cl)
    return chrom


def random_chromosome(num_clients: int, num_channels: int, rng) -> np.ndarray:
    return repair(rng.integers(FREE, num_clients, size=num_channels))


def crossover(p1: np.ndarray, p2: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Single-point tail swap followed by repair."""
    c = p1.shape[0]
    if c < 2:
        return p1.copy(), p2.copy()
    cut = int(rng.integers(1, c))
    c1 = np.concatenate([p1[:cut], p2[cut:]])
    c2 = np.concatenate([p2[:cut], p1[cut:]])
    return repair(c1), repair(c2)


def mutate(chrom: np.ndarray, prob: float, num_clients: int, rng) -> np.ndarray:
    flips = rng.random(chrom.shape[0]) < prob
    if flips.any():
        fresh = rng.integers(FREE, num_clients, size=int(flips.sum()))
        chrom = chrom.copy()
        chrom[flips] = fresh
        repair(chrom)
    return chrom


def _select_parents(pop, fitness, rng) -> list[np.ndarray]:
    total = float(np.sum(fitness))
    n = len(pop)
    if total <= 0.0:
        idx = rng.integers(0, n, size=n)
    else:
        idx = rng.choice(n, size=n, p=np.asarray(fitness) / total)
    return [pop[i] for i in idx]


def ga_allocate(evaluator: ChromosomeEvaluator, num_channels: int,
                params: GaParams, rng) -> ChromEval:
    """Evolve channel assignments and return the best feasible one ever seen.

    Should no feasible chromosome appear (it always does: the empty
    assignment is feasible), the empty decision is returned.
    """
    u = evaluator.num_clients
    n_pop = params.population
    pop = [random_chromosome(u, num_channels, rng) for _ in range(n_pop)]
    best: ChromEval | None = None

    def track(evals):
        nonlocal best
        for ev in evals:
            if ev.feasible and (best is None or ev.objective < best.objective):
                best = ev

    for _ in range(params.generations):
        evals = [evaluator.evaluate(ch) for ch in pop]
        track(evals)
        feasible_js = [e.objective for e in evals if e.feasible]
        j_max = max(feasible_js) if feasible_js else 0.0
        fitness = [fitness_value(e.objective, j_max, params.fitness_exponent)
                   if e.feasible else 0.0 for e in evals]
        parents = _select_parents(pop, fitness, rng)

        # per-generation randomness drawn in one batch per operator
        do_cross = rng.random(n_pop // 2) < params.crossover_prob
        cuts = rng.integers(1, max(num_channels, 2), size=n_pop // 2)
        flips = rng.random((n_pop, num_channels)) < params.mutation_prob
        fresh = rng.integers(FREE, u, size=(n_pop, num_channels))

        nxt = []
        for pair in range(n_pop // 2):
            a, b = parents[2 * pair], parents[2 * pair + 1]
            if do_cross[pair] and num_channels >= 2:
                cut = int(cuts[pair])
                a = np.concatenate([a[:cut], b[cut:]])
                b = np.concatenate([b[:cut], parents[2 * pair][cut:]])
            else:
                a, b = a.copy(), b.copy()
            for child, row in ((a, 2 * pair), (b, 2 * pair + 1)):
                mask = flips[row]
                if mask.any():
                    child[mask] = fresh[row][mask]
                repair(child)
                nxt.append(child)
        if best is not None:
            nxt[0] = best.chrom.copy()  # elitism: best-ever J never regresses
        pop = nxt

    track([evaluator.evaluate(ch) for ch in pop])
    if best is None:
        return evaluator.evaluate(np.full(num_channels, FREE, dtype=np.int64))
    return best


def exhaustive_allocate(evaluator: ChromosomeEvaluator, num_channels: int,
                        max_clients: int = 5, max_channels: int = 5) -> ChromEval:
    """Global optimum by enumerating every valid assignment (tests only)."""
    u = evaluator.num_clients
    if u > max_clients or num_channels > max_channels:
        raise ValueError("instance too large to enumerate")
    best: ChromEval | None = None
    for genes in itertools.product(range(FREE, u), repeat=num_channels):
        used = [g for g in genes if g != FREE]
        if len(used) != len(set(used)):
            continue
        ev = evaluator.evaluate(np.asarray(genes, dtype=np.int64))
        if ev.feasible and (best is None or ev.objective < best.objective):
            best = ev
    assert best is not None  # the all-free assignment is always feasible
    return best
