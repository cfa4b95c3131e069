"""Genetic operators over variable-length genomes.

All operators are pure functions of their inputs and an explicit
``numpy.random.Generator``: the same generator state always yields the
same outputs, which is what makes whole runs replayable.  The exact
order of random draws inside each operator is part of its contract and
is documented below, so an independent replay sharing the generator
stream reproduces results draw for draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .genome import Genome, LayerGene, PoolGene, PoolType, SkipGene, identifier

# Resampling bounds; both are convergence guards, not tunables.
PARENT_DISTINCT_RETRIES = 32
CROSSOVER_SPLIT_RETRIES = 8


@dataclass
class Individual:
    """A genome plus its (optional) fitness and lazily computed identifier."""

    genome: Genome
    fitness: float | None = None
    _id: str | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.fitness is not None and not 0.0 <= self.fitness <= 1.0:
            raise ValueError(f"fitness must be in [0, 1], got {self.fitness}")

    @property
    def id(self) -> str:
        if self._id is None:
            self._id = identifier(self.genome)
        return self._id

    def copy(self) -> "Individual":
        return Individual(self.genome, self.fitness, self._id)


@dataclass
class Population:
    individuals: list[Individual]
    generation: int = 0

    def __len__(self) -> int:
        return len(self.individuals)

    def best(self) -> Individual:
        """Best-fitness individual; fitness ties broken by lower identifier."""
        return _best_of(self.individuals)

    def mean_fitness(self) -> float:
        return sum(ind.fitness for ind in self.individuals) / len(self.individuals)


class MutationOp(Enum):
    ADD_SKIP = "add_skip"
    ADD_POOL = "add_pool"
    REMOVE = "remove"
    ALTER = "alter"


@dataclass(frozen=True)
class MutationWeights:
    """Relative selection weights of the four mutation operations.

    Weights are kept as given and compared against their own sum when
    drawing, so the defaults (0.7 / 0.1 / 0.1 / 0.1) behave as exact
    normalized probabilities.
    """

    add_skip: float = 0.7
    add_pool: float = 0.1
    remove: float = 0.1
    alter: float = 0.1

    def __post_init__(self):
        vals = (self.add_skip, self.add_pool, self.remove, self.alter)
        if any(v < 0 for v in vals):
            raise ValueError("mutation weights must be non-negative")
        if sum(vals) <= 0:
            raise ValueError("mutation weights must not all be zero")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.add_skip, self.add_pool, self.remove, self.alter)


@dataclass(frozen=True)
class EvolutionConfig:
    """Search hyperparameters; defaults follow the conventional settings
    this engine was designed around (population and generations of 20,
    crossover 0.9, mutation 0.2, feature maps {64, 128, 256})."""

    population_size: int = 20
    max_generations: int = 20
    p_crossover: float = 0.9
    p_mutation: float = 0.2
    feature_map_set: tuple[int, ...] = (64, 128, 256)
    init_depth_range: tuple[int, int] = (1, 20)
    mutation_weights: MutationWeights = field(default_factory=MutationWeights)
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")
        for name in ("p_crossover", "p_mutation"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {p}")
        fm = tuple(sorted(set(int(v) for v in self.feature_map_set)))
        if not fm or any(v < 1 for v in fm):
            raise ValueError("feature_map_set must contain positive integers")
        object.__setattr__(self, "feature_map_set", fm)
        lo, hi = self.init_depth_range
        if lo < 1 or hi < lo:
            raise ValueError(f"init_depth_range must satisfy 1 <= lo <= hi, got ({lo}, {hi})")
        object.__setattr__(self, "init_depth_range", (int(lo), int(hi)))
        if not isinstance(self.rng_seed, int) or not 0 <= self.rng_seed < 2**64:
            raise ValueError(f"rng_seed must be an unsigned 64-bit integer, got {self.rng_seed!r}")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "max_generations": self.max_generations,
            "p_crossover": self.p_crossover,
            "p_mutation": self.p_mutation,
            "feature_map_set": list(self.feature_map_set),
            "init_depth_range": list(self.init_depth_range),
            "mutation_weights": {
                "add_skip": self.mutation_weights.add_skip,
                "add_pool": self.mutation_weights.add_pool,
                "remove": self.mutation_weights.remove,
                "alter": self.mutation_weights.alter,
            },
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvolutionConfig":
        kwargs = dict(data)
        if "feature_map_set" in kwargs:
            kwargs["feature_map_set"] = tuple(kwargs["feature_map_set"])
        if "init_depth_range" in kwargs:
            kwargs["init_depth_range"] = tuple(kwargs["init_depth_range"])
        if "mutation_weights" in kwargs and isinstance(kwargs["mutation_weights"], dict):
            kwargs["mutation_weights"] = MutationWeights(**kwargs["mutation_weights"])
        return cls(**kwargs)


def _random_skip(config: EvolutionConfig, rng: np.random.Generator) -> SkipGene:
    # Draw order: f1, then f2, uniform over the sorted feature-map set.
    fm = config.feature_map_set
    f1 = fm[int(rng.integers(len(fm)))]
    f2 = fm[int(rng.integers(len(fm)))]
    return SkipGene(f1, f2)


def _random_pool(rng: np.random.Generator) -> PoolGene:
    return PoolGene(PoolType.MAX if rng.random() < 0.5 else PoolType.MEAN)


def _random_gene(config: EvolutionConfig, rng: np.random.Generator) -> LayerGene:
    # Coin flip: skip below 0.5, pool otherwise.
    if rng.random() < 0.5:
        return _random_skip(config, rng)
    return _random_pool(rng)


def initialize_population(config: EvolutionConfig, rng: np.random.Generator) -> Population:
    """Create the starting population.

    Per individual: depth drawn uniformly from ``init_depth_range``
    (inclusive), then each gene drawn by :func:`_random_gene`.  All
    fitness values start unset.
    """
    lo, hi = config.init_depth_range
    individuals = []
    for _ in range(config.population_size):
        depth = int(rng.integers(lo, hi + 1))
        genes = tuple(_random_gene(config, rng) for _ in range(depth))
        individuals.append(Individual(Genome(genes)))
    return Population(individuals, generation=0)


def _require_fitness(individuals: list[Individual]) -> None:
    for ind in individuals:
        if ind.fitness is None:
            raise ValueError("all individuals must have fitness set before selection")


def _tournament(individuals: list[Individual], rng: np.random.Generator) -> Individual:
    # Draw order: index i, index j, then one uniform draw only on a fitness tie.
    n = len(individuals)
    a = individuals[int(rng.integers(n))]
    b = individuals[int(rng.integers(n))]
    if a.fitness > b.fitness:
        return a
    if b.fitness > a.fitness:
        return b
    return a if rng.random() < 0.5 else b


def binary_tournament(pop: Population, rng: np.random.Generator) -> Individual:
    """Sample two individuals with replacement, keep the fitter one.

    Ties are broken uniformly at random.
    """
    if not pop.individuals:
        raise ValueError("population is empty")
    _require_fitness(pop.individuals)
    return _tournament(pop.individuals, rng)


def select_parents(pop: Population, rng: np.random.Generator) -> tuple[Individual, Individual]:
    """Pick two parents by binary tournament, resampling the second until
    its identifier differs from the first's.

    Resampling stops after 32 retries so a fully converged population
    still terminates (a duplicate pair is then accepted).
    """
    p1 = binary_tournament(pop, rng)
    p2 = binary_tournament(pop, rng)
    retries = 0
    while p2.id == p1.id and retries < PARENT_DISTINCT_RETRIES:
        p2 = binary_tournament(pop, rng)
        retries += 1
    return p1, p2


def _split_index(length: int, rng: np.random.Generator) -> int:
    # Genomes of length >= 2 split strictly inside [1, len-1]; length-1
    # genomes may contribute their whole genome or nothing ({0, 1}).
    if length >= 2:
        return int(rng.integers(1, length))
    return int(rng.integers(0, 2))


def crossover(
    p1: Individual,
    p2: Individual,
    p_crossover: float,
    rng: np.random.Generator,
) -> tuple[Individual, Individual]:
    """Variable-length one-point crossover.

    Draw order: one uniform draw against ``p_crossover``; when crossing,
    a split index for each parent (see :func:`_split_index`).  Offspring
    are head(p1)+tail(p2) and head(p2)+tail(p1), which preserves the
    combined gene multiset exactly.  Split pairs producing an empty
    offspring are redrawn up to 8 times before falling back to parent
    copies.  Spliced offspring have fitness unset; parent copies keep it.
    """
    if rng.random() >= p_crossover:
        return p1.copy(), p2.copy()

    g1, g2 = p1.genome.layers, p2.genome.layers
    for _ in range(1 + CROSSOVER_SPLIT_RETRIES):
        s1 = _split_index(len(g1), rng)
        s2 = _split_index(len(g2), rng)
        c1 = g1[:s1] + g2[s2:]
        c2 = g2[:s2] + g1[s1:]
        if c1 and c2:
            return Individual(Genome(c1)), Individual(Genome(c2))
    return p1.copy(), p2.copy()


def pick_mutation_op(
    weights: MutationWeights,
    rng: np.random.Generator,
    allow_remove: bool = True,
) -> MutationOp:
    """Draw one mutation operation according to the configured weights.

    With ``allow_remove=False`` (length-1 genomes) the draw is taken over
    the remaining three operations with their weights renormalized.
    """
    ops = [MutationOp.ADD_SKIP, MutationOp.ADD_POOL, MutationOp.REMOVE, MutationOp.ALTER]
    ws = list(weights.as_tuple())
    if not allow_remove:
        idx = ops.index(MutationOp.REMOVE)
        del ops[idx], ws[idx]
    u = rng.random() * sum(ws)
    acc = 0.0
    for op, w in zip(ops, ws):
        acc += w
        if u < acc:
            return op
    return ops[-1]


def mutate(ind: Individual, config: EvolutionConfig, rng: np.random.Generator) -> Individual:
    """Point mutation at one uniformly drawn gene position.

    Draw order: one uniform draw against ``p_mutation`` (at or above it the
    individual is returned as an unchanged copy), the position, then the
    operation.  ADD_SKIP / ADD_POOL insert a random gene at the position,
    REMOVE deletes the gene there (re-drawn among the other operations on
    length-1 genomes so genomes never empty), ALTER resamples the gene's
    parameters in place (skip: fresh f1 and f2; pool: type flipped).
    Fitness is unset iff the genome changed.
    """
    if rng.random() >= config.p_mutation:
        return ind.copy()

    genes = list(ind.genome.layers)
    pos = int(rng.integers(len(genes)))
    op = pick_mutation_op(config.mutation_weights, rng, allow_remove=len(genes) > 1)

    if op is MutationOp.ADD_SKIP:
        genes.insert(pos, _random_skip(config, rng))
    elif op is MutationOp.ADD_POOL:
        genes.insert(pos, _random_pool(rng))
    elif op is MutationOp.REMOVE:
        del genes[pos]
    else:  # ALTER
        gene = genes[pos]
        if isinstance(gene, SkipGene):
            genes[pos] = _random_skip(config, rng)
        else:
            flipped = PoolType.MEAN if gene.pool_type is PoolType.MAX else PoolType.MAX
            genes[pos] = PoolGene(flipped)

    new_genome = Genome(tuple(genes))
    if new_genome == ind.genome:
        return ind.copy()
    return Individual(new_genome)


def generate_offspring(
    pop: Population, config: EvolutionConfig, rng: np.random.Generator
) -> Population:
    """One full offspring-generation pass: repeated parent selection and
    crossover until ``|pop|`` offspring exist, then a mutation sweep.

    Odd population sizes generate one surplus offspring in the final
    crossover pair; the surplus is dropped before mutation.
    """
    offspring: list[Individual] = []
    while len(offspring) < len(pop.individuals):
        p1, p2 = select_parents(pop, rng)
        o1, o2 = crossover(p1, p2, config.p_crossover, rng)
        offspring.extend((o1, o2))
    del offspring[len(pop.individuals):]
    offspring = [mutate(ind, config, rng) for ind in offspring]
    return Population(offspring, generation=pop.generation)


def _best_of(individuals: list[Individual]) -> Individual:
    best = individuals[0]
    for ind in individuals[1:]:
        if ind.fitness > best.fitness or (ind.fitness == best.fitness and ind.id < best.id):
            best = ind
    return best


def _worst_index(individuals: list[Individual]) -> int:
    # Mirror of the elite rule: lowest fitness loses, ties broken toward the
    # lexicographically greater identifier, full ties toward the first index.
    worst = 0
    for i in range(1, len(individuals)):
        a, w = individuals[i], individuals[worst]
        if a.fitness < w.fitness or (a.fitness == w.fitness and a.id > w.id):
            worst = i
    return worst


def environmental_selection(
    parents: Population, offspring: Population, rng: np.random.Generator
) -> Population:
    """Choose the next generation from parents plus offspring.

    ``|parents|`` slots are filled by repeated binary tournament over the
    combined pool (parents listed first; draw order per slot: index i,
    index j, tie draw only on equal fitness).  If the globally best
    individual (fitness ties broken by lower identifier) is then missing
    by identifier, it replaces the worst selected individual.  The
    generation counter advances by one.
    """
    combined = parents.individuals + offspring.individuals
    _require_fitness(combined)

    selected = [_tournament(combined, rng).copy() for _ in range(len(parents.individuals))]

    elite = _best_of(combined)
    if elite.id not in {ind.id for ind in selected}:
        selected[_worst_index(selected)] = elite.copy()
    return Population(selected, generation=parents.generation + 1)
