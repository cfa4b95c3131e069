"""Generational search engine: the main loop, fitness cache, concurrent
evaluation dispatch, run history, and checkpoint/resume.

Determinism is the engine's core obligation: a run is a pure function of
(config, seed, evaluator behavior), independent of the worker count and of
job completion order.  Three rules make that hold:

* RNG streams are derived per generation and operator class from the run
  seed via ``SeedSequence(seed, spawn_key=(generation, op_class))``, where
  op_class 0 is initialization, 1 offspring generation, 2 environmental
  selection.  No generator state needs to be serialized: a resumed run
  re-derives exactly the streams an uninterrupted run would have used.
* Job seeds are derived from the run seed and the genome identifier, never
  from dispatch order.
* Fitness is a function of the identifier alone: results are merged into
  the cache after a whole evaluation pass completes and individuals are
  then assigned from the cache, so completion order cannot leak through.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from hashlib import sha224
from pathlib import Path

import numpy as np

from .evaluators import (
    EvaluationJob,
    EvaluationResult,
    EvaluatorUnavailableError,
    SurrogateEvaluator,
)
from .evolution import (
    EvolutionConfig,
    Individual,
    Population,
    environmental_selection,
    generate_offspring,
    initialize_population,
)
from .genome import Genome, canonical_serialize, parse_genome, validate

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

# op-class ids for the stream-splitting rule documented above
_STREAM_INIT = 0
_STREAM_OFFSPRING = 1
_STREAM_SELECTION = 2


def _stream(seed: int, generation: int, op_class: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(generation, op_class)))


def job_seed(run_seed: int, digest: str) -> int:
    """Deterministic 64-bit training seed for one genome identifier."""
    return int(sha224(f"{run_seed}:{digest}".encode("ascii")).hexdigest()[:16], 16)


class CheckpointError(RuntimeError):
    pass


class FitnessCache:
    """Identifier -> fitness map shared across a whole run.

    Entries are never evicted.  A conflicting re-write (same key, different
    value) keeps the first value and logs a warning: with a deterministic
    evaluator it indicates a bug upstream, never silent data loss.
    """

    def __init__(self, entries: dict[str, float] | None = None):
        self.entries: dict[str, float] = dict(entries or {})

    def __contains__(self, digest: str) -> bool:
        return digest in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, digest: str) -> float:
        return self.entries[digest]

    def put(self, digest: str, fitness: float) -> None:
        if digest in self.entries and self.entries[digest] != fitness:
            logger.warning(
                "cache conflict for %s: keeping %r, ignoring %r",
                digest, self.entries[digest], fitness,
            )
            return
        self.entries[digest] = fitness


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write-then-rename so readers never observe a torn file."""
    path = Path(path)
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def cache_store(cache: FitnessCache, path: str | Path) -> None:
    """Persist the cache as ``<identifier> <fitness>`` lines, sorted by key."""
    lines = [f"{k} {v!r}\n" for k, v in sorted(cache.entries.items())]
    atomic_write_text(path, "".join(lines))


def cache_load(path: str | Path) -> FitnessCache:
    """Load a cache file; corrupt lines are skipped with a warning."""
    cache = FitnessCache()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                digest, fitness = parts[0], float(parts[1])
                if len(parts) != 2 or len(digest) != 56 or not 0.0 <= fitness <= 1.0:
                    raise ValueError(line)
            except (IndexError, ValueError):
                logger.warning("%s:%d: skipping corrupt cache line %r", path, lineno, line)
                continue
            cache.put(digest, fitness)
    return cache


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_identifier: str
    cache_hits: int
    cache_misses: int
    duration_seconds: float

    def csv_row(self) -> str:
        return (
            f"{self.generation},{self.best_fitness!r},{self.mean_fitness!r},"
            f"{self.best_identifier},{self.cache_hits},{self.cache_misses}"
        )

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "best_identifier": self.best_identifier,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "duration_seconds": self.duration_seconds,
        }


CSV_HEADER = "generation,best_fitness,mean_fitness,best_identifier,cache_hits,cache_misses"


@dataclass
class RunHistory:
    """Per-generation statistics, one record per generation including 0.

    The CSV export deliberately omits the wall-clock duration column so
    that identical seeded runs produce byte-identical files; durations
    stay available on the records and in checkpoints.
    """

    records: list[GenerationRecord] = field(default_factory=list)

    def append(self, record: GenerationRecord) -> None:
        self.records.append(record)

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv_row() for r in self.records]) + "\n"

    def write_csv(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_csv())

    def best_fitness_trace(self) -> list[float]:
        return [r.best_fitness for r in self.records]


@dataclass(frozen=True)
class EvalStats:
    """Bookkeeping for one evaluation pass.

    ``misses`` counts unique identifiers absent from the cache when the
    pass began (each one costs at most one evaluator call; invalid genomes
    are penalized without a call), ``hits`` the remaining individuals.
    """

    hits: int
    misses: int
    evaluator_calls: int

    def __add__(self, other: "EvalStats") -> "EvalStats":
        return EvalStats(
            self.hits + other.hits,
            self.misses + other.misses,
            self.evaluator_calls + other.evaluator_calls,
        )


class EvaluatorPool:
    """A fixed set of evaluator slots executing jobs concurrently.

    Each underlying evaluator handles one job at a time; at most
    ``worker_count`` jobs are in flight.
    """

    def __init__(self, factory, worker_count: int):
        if worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        self._evaluators = [factory() for _ in range(worker_count)]
        self._idle: queue.SimpleQueue = queue.SimpleQueue()
        for evaluator in self._evaluators:
            self._idle.put(evaluator)
        self._executor = ThreadPoolExecutor(max_workers=worker_count)

    def _run_one(self, job: EvaluationJob) -> EvaluationResult:
        evaluator = self._idle.get()
        try:
            return evaluator.evaluate(job)
        except EvaluatorUnavailableError:
            raise
        except Exception as exc:  # absorbed as a penalty by the engine
            return EvaluationResult(job.job_id, None, f"evaluator raised: {exc!r}")
        finally:
            self._idle.put(evaluator)

    def evaluate_all(self, jobs: list[EvaluationJob]) -> dict[str, EvaluationResult]:
        """Run all jobs; returns results keyed by job_id.

        An :class:`EvaluatorUnavailableError` on any slot is re-raised
        after in-flight jobs drain, discarding the pass.
        """
        futures = [self._executor.submit(self._run_one, job) for job in jobs]
        results: dict[str, EvaluationResult] = {}
        fatal: EvaluatorUnavailableError | None = None
        for future in as_completed(futures):
            try:
                result = future.result()
            except EvaluatorUnavailableError as exc:
                fatal = fatal or exc
                continue
            results[result.job_id] = result
        if fatal is not None:
            raise fatal
        return results

    def close(self) -> None:
        self._executor.shutdown(wait=True)
        for evaluator in self._evaluators:
            evaluator.close()


def evaluate_population(
    pop: Population,
    pool: EvaluatorPool,
    cache: FitnessCache,
    *,
    input_spatial: int = 32,
    epochs: int = 1,
    run_seed: int = 0,
    penalty_fitness: float = 0.0,
) -> EvalStats:
    """Assign fitness to every individual, consulting the cache first.

    Cached identifiers never reach an evaluator; duplicated identifiers
    within the population share a single evaluation.  Structurally invalid
    genomes receive the penalty fitness without an evaluator call, as do
    jobs whose evaluator reported an error.  All results land in the cache
    before any individual is assigned, so assignment is a pure function of
    the identifiers.
    """
    jobs: list[EvaluationJob] = []
    seen: set[str] = set()
    misses = 0
    for ind in pop.individuals:
        digest = ind.id
        if digest in cache or digest in seen:
            continue
        seen.add(digest)
        misses += 1
        if validate(ind.genome, input_spatial).valid:
            jobs.append(EvaluationJob(digest, ind.genome, epochs, job_seed(run_seed, digest)))
        else:
            logger.warning("invalid genome %s assigned penalty fitness", digest[:12])
            cache.put(digest, penalty_fitness)

    results = pool.evaluate_all(jobs)
    for digest in sorted(results):
        result = results[digest]
        if result.ok:
            cache.put(digest, result.fitness)
        else:
            logger.warning("evaluation of %s failed: %s", digest[:12], result.message)
            cache.put(digest, penalty_fitness)

    for ind in pop.individuals:
        ind.fitness = cache.get(ind.id)
    return EvalStats(hits=len(pop.individuals) - misses, misses=misses, evaluator_calls=len(jobs))


@dataclass
class EngineState:
    """Everything needed to continue a run: written by checkpoints."""

    config: EvolutionConfig
    generation: int
    population: Population
    history: RunHistory
    cache: FitnessCache
    cache_path: str
    input_shape: tuple[int, int, int]
    num_classes: int
    run_config: dict = field(default_factory=dict)  # caller-level config echo


def save_checkpoint(state: EngineState, path: str | Path) -> None:
    """Write the checkpoint JSON and the cache snapshot it references."""
    cache_store(state.cache, state.cache_path)
    payload = {
        "version": CHECKPOINT_VERSION,
        "generation": state.generation,
        "population": [
            {"genome": canonical_serialize(ind.genome).decode("ascii"), "fitness": ind.fitness}
            for ind in state.population.individuals
        ],
        "rng": {"scheme": "per-generation-streams-v1", "seed": state.config.rng_seed},
        "config": state.config.to_dict(),
        "run_config": state.run_config,
        "input_shape": list(state.input_shape),
        "num_classes": state.num_classes,
        "cache_path": str(state.cache_path),
        "history": [r.to_dict() for r in state.history.records],
    }
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> EngineState:
    """Load a checkpoint and the cache snapshot it references.

    Raises :class:`CheckpointError` on a missing file, unsupported version,
    malformed content, or a missing cache snapshot.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version!r} is not supported (expected {CHECKPOINT_VERSION})"
        )
    try:
        config = EvolutionConfig.from_dict(payload["config"])
        individuals = [
            Individual(parse_genome(entry["genome"]), entry["fitness"])
            for entry in payload["population"]
        ]
        population = Population(individuals, generation=payload["generation"])
        history = RunHistory([GenerationRecord(**r) for r in payload["history"]])
        cache_path = payload["cache_path"]
        input_shape = tuple(payload["input_shape"])
        num_classes = payload["num_classes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc

    if not Path(cache_path).exists():
        raise CheckpointError(f"cache file referenced by checkpoint is missing: {cache_path}")
    cache = cache_load(cache_path)
    return EngineState(
        config=config,
        generation=payload["generation"],
        population=population,
        history=history,
        cache=cache,
        cache_path=cache_path,
        input_shape=input_shape,
        num_classes=num_classes,
        run_config=payload.get("run_config", {}),
    )


@dataclass
class RunResult:
    best: Individual
    history: RunHistory
    population: Population
    cache: FitnessCache


def run(
    config: EvolutionConfig,
    evaluator_factory=None,
    worker_count: int = 1,
    *,
    input_shape: tuple[int, int, int] = (32, 32, 3),
    num_classes: int = 10,
    epochs: int = 1,
    penalty_fitness: float = 0.0,
    cache: FitnessCache | None = None,
    cache_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    stop_after: int | None = None,
    resume_state: EngineState | None = None,
    checkpoint_extra: dict | None = None,
) -> RunResult:
    """Execute the generational search loop.

    Initializes (or resumes) a population, then repeats: evaluate the
    population, generate offspring, evaluate them, environmental selection.
    Returns the best individual of the final population together with the
    full history (one record per generation, generation 0 included).

    ``stop_after`` ends the session once that generation completes, leaving
    a checkpoint to resume from; ``resume_state`` continues a checkpointed
    run (``config`` and shapes are then taken from the state).  On an
    unrecoverable evaluator transport failure the last completed state is
    checkpointed before the error propagates.
    """
    if resume_state is not None:
        config = resume_state.config
        input_shape = resume_state.input_shape
        num_classes = resume_state.num_classes
        cache = resume_state.cache
        cache_path = cache_path or resume_state.cache_path
        pop = resume_state.population
        history = resume_state.history
        start_generation = resume_state.generation
    else:
        cache = cache if cache is not None else FitnessCache()
        pop = None
        history = RunHistory()
        start_generation = 0

    if checkpoint_path is not None and cache_path is None:
        raise ValueError("checkpointing requires a cache_path for the cache snapshot")
    if evaluator_factory is None:
        evaluator_factory = SurrogateEvaluator
    seed = config.rng_seed
    eval_kwargs = dict(
        input_spatial=input_shape[0],
        epochs=epochs,
        run_seed=seed,
        penalty_fitness=penalty_fitness,
    )

    if checkpoint_extra is None and resume_state is not None:
        checkpoint_extra = resume_state.run_config

    def make_state(current: Population) -> EngineState:
        return EngineState(
            config=config,
            generation=current.generation,
            population=current,
            history=history,
            cache=cache,
            cache_path=str(cache_path) if cache_path else "",
            input_shape=tuple(input_shape),
            num_classes=num_classes,
            run_config=checkpoint_extra or {},
        )

    def persist(current: Population) -> None:
        if checkpoint_path is not None and cache_path is not None:
            save_checkpoint(make_state(current), checkpoint_path)
        elif cache_path is not None:
            cache_store(cache, cache_path)

    def record(current: Population, stats: EvalStats, started: float) -> None:
        best = current.best()
        history.append(
            GenerationRecord(
                generation=current.generation,
                best_fitness=best.fitness,
                mean_fitness=current.mean_fitness(),
                best_identifier=best.id,
                cache_hits=stats.hits,
                cache_misses=stats.misses,
                duration_seconds=time.perf_counter() - started,
            )
        )

    pool = EvaluatorPool(evaluator_factory, worker_count)
    try:
        if pop is None:
            started = time.perf_counter()
            pop = initialize_population(config, _stream(seed, 0, _STREAM_INIT))
            stats = evaluate_population(pop, pool, cache, **eval_kwargs)
            record(pop, stats, started)
            persist(pop)

        last_generation = config.max_generations
        if stop_after is not None:
            last_generation = min(stop_after, last_generation)
        for t in range(start_generation, last_generation):
            started = time.perf_counter()
            try:
                stats = evaluate_population(pop, pool, cache, **eval_kwargs)
                offspring = generate_offspring(pop, config, _stream(seed, t + 1, _STREAM_OFFSPRING))
                stats += evaluate_population(offspring, pool, cache, **eval_kwargs)
            except EvaluatorUnavailableError:
                logger.error("evaluator transport failed; checkpointing generation %d", pop.generation)
                persist(pop)
                raise
            pop = environmental_selection(pop, offspring, _stream(seed, t + 1, _STREAM_SELECTION))
            record(pop, stats, started)
            persist(pop)
    finally:
        pool.close()

    return RunResult(best=pop.best(), history=history, population=pop, cache=cache)
