import threading

import numpy as np
import pytest

from evoarch import (
    Genome,
    Individual,
    PoolGene,
    PoolType,
    Population,
    SkipGene,
    SurrogateEvaluator,
)

FEATURE_MAPS = (64, 128, 256)


def random_gene(rng: np.random.Generator, p_skip: float = 0.5):
    if rng.random() < p_skip:
        f1 = FEATURE_MAPS[rng.integers(3)]
        f2 = FEATURE_MAPS[rng.integers(3)]
        return SkipGene(int(f1), int(f2))
    return PoolGene(PoolType.MAX if rng.random() < 0.5 else PoolType.MEAN)


def random_genome(rng: np.random.Generator, min_len: int = 1, max_len: int = 8, max_pools: int | None = None) -> Genome:
    """Random genome; with max_pools set, pool genes beyond the budget are
    replaced by skip genes so the genome stays valid for 32px inputs."""
    length = int(rng.integers(min_len, max_len + 1))
    genes = []
    pools = 0
    for _ in range(length):
        gene = random_gene(rng)
        if isinstance(gene, PoolGene):
            if max_pools is not None and pools >= max_pools:
                gene = SkipGene(int(FEATURE_MAPS[rng.integers(3)]), int(FEATURE_MAPS[rng.integers(3)]))
            else:
                pools += 1
        genes.append(gene)
    return Genome(tuple(genes))


def random_population(rng: np.random.Generator, size: int, with_fitness: bool = True) -> Population:
    individuals = []
    for _ in range(size):
        ind = Individual(random_genome(rng))
        if with_fitness:
            ind.fitness = float(rng.random())
        individuals.append(ind)
    return Population(individuals)


class CountingEvaluator:
    """Surrogate evaluator that counts evaluate() calls across all slots."""

    def __init__(self, counter: "CallCounter"):
        self._inner = SurrogateEvaluator()
        self._counter = counter

    def evaluate(self, job):
        self._counter.record(job.job_id)
        return self._inner.evaluate(job)

    def close(self):
        pass


class CallCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.job_ids: list[str] = []

    def record(self, job_id: str) -> None:
        with self._lock:
            self.job_ids.append(job_id)

    @property
    def count(self) -> int:
        return len(self.job_ids)

    def factory(self):
        return lambda: CountingEvaluator(self)


class ScriptedRng:
    """Duck-typed generator stub replaying prepared draw sequences."""

    def __init__(self, integers=(), randoms=()):
        self._integers = iter(integers)
        self._randoms = iter(randoms)

    def integers(self, low, high=None):
        return next(self._integers)

    def random(self):
        return next(self._randoms)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
