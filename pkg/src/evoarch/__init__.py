"""Evolutionary search over variable-length CNN architectures.

The package splits into: genome representation and decoding
(:mod:`evoarch.genome`), genetic operators (:mod:`evoarch.evolution`),
fitness evaluators and the trainer wire protocol
(:mod:`evoarch.evaluators`), the generational engine with caching and
checkpoints (:mod:`evoarch.engine`), and the command-line surface
(:mod:`evoarch.cli`).
"""

from .engine import (
    EngineState,
    EvaluatorPool,
    FitnessCache,
    GenerationRecord,
    RunHistory,
    RunResult,
    cache_load,
    cache_store,
    evaluate_population,
    load_checkpoint,
    run,
    save_checkpoint,
)
from .evaluators import (
    EvaluationJob,
    EvaluationResult,
    EvaluatorKind,
    EvaluatorSpec,
    SurrogateEvaluator,
    external_evaluate,
    make_evaluator,
    surrogate_fitness,
)
from .evolution import (
    EvolutionConfig,
    Individual,
    MutationOp,
    MutationWeights,
    Population,
    binary_tournament,
    crossover,
    environmental_selection,
    generate_offspring,
    initialize_population,
    mutate,
    pick_mutation_op,
    select_parents,
)
from .genome import (
    ArchitectureIR,
    ClassifierHead,
    Genome,
    GenomeParseError,
    GenomeValidationError,
    LayerGene,
    PoolBlock,
    PoolGene,
    PoolType,
    SkipBlock,
    SkipGene,
    ValidationReport,
    canonical_serialize,
    count_parameters,
    decode,
    identifier,
    parse_genome,
    validate,
)

__version__ = "0.1.0"
