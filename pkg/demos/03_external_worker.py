# Running the same search through the external-trainer wire protocol.
#
# The engine does not care where fitness comes from: here each evaluation
# travels as one JSON line to a child process (the bundled surrogate
# worker) and one JSON line comes back.  Because fitness is a pure
# function of the genome identifier, the external run must reproduce the
# in-process run bit for bit - worker processes, concurrency and all.

import sys

from evoarch import EvaluatorKind, EvaluatorSpec, EvolutionConfig, make_evaluator, run

config = EvolutionConfig(rng_seed=7)

in_process = run(config, worker_count=1)

spec = EvaluatorSpec(
    kind=EvaluatorKind.EXTERNAL,
    command=(sys.executable, "-m", "evoarch.surrogate_worker"),
    epochs=1,
    dataset="demo",
)
over_the_wire = run(
    config,
    lambda: make_evaluator(spec, input_shape=(32, 32, 3), num_classes=10),
    worker_count=4,  # four worker processes, jobs dispatched concurrently
)

print("in-process best:   ", in_process.best.fitness, in_process.best.id[:16])
print("over-the-wire best:", over_the_wire.best.fitness, over_the_wire.best.id[:16])

assert in_process.history.to_csv() == over_the_wire.history.to_csv()
print("\nfull histories identical: evaluation transport is invisible to the search")

# A real trainer replaces the worker command, e.g.
#   ["python", "-m", "trainer_worker", "--device", "cuda"]
# and reports best validation accuracy instead of the surrogate score;
# see the trainer/ package.
