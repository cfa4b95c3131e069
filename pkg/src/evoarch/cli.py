"""Command-line surface: run searches, resume them, decode genomes.

All commands are non-interactive.  Errors print a single ``error: ...``
line on stderr; exit code 2 marks config/parse problems, 1 runtime
failures.  Run artifacts (history.csv, best.genome, best.arch.json,
checkpoint.json, cache.txt) are written atomically into the output
directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import engine
from .evaluators import (
    EvaluatorKind,
    EvaluatorSpec,
    EvaluatorUnavailableError,
    make_evaluator,
)
from .evolution import EvolutionConfig, MutationWeights
from .genome import (
    GenomeParseError,
    GenomeValidationError,
    canonical_serialize,
    count_parameters,
    decode,
    parse_genome,
)


class ConfigError(ValueError):
    pass


_EVOLUTION_KEYS = {
    "population_size",
    "max_generations",
    "p_crossover",
    "p_mutation",
    "feature_map_set",
    "init_depth_range",
    "mutation_weights",
    "rng_seed",
}
_WEIGHT_KEYS = {"add_skip", "add_pool", "remove", "alter"}
_EVALUATOR_KEYS = {"kind", "command", "endpoint", "epochs", "dataset", "timeout"}
_TOP_KEYS = _EVOLUTION_KEYS | {
    "evaluator",
    "worker_count",
    "out_dir",
    "cache_path",
    "input_shape",
    "num_classes",
}


@dataclass
class RunConfig:
    """Full configuration of one search run (the config-file contents)."""

    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    evaluator: EvaluatorSpec = field(default_factory=EvaluatorSpec)
    worker_count: int = 1
    out_dir: str = "evoarch-out"
    cache_path: str | None = None  # default: <out_dir>/cache.txt
    input_shape: tuple[int, int, int] = (32, 32, 3)
    num_classes: int = 10

    def to_dict(self) -> dict:
        data = self.evolution.to_dict()
        data.update(
            {
                "evaluator": {
                    "kind": self.evaluator.kind.value,
                    "command": list(self.evaluator.command) if self.evaluator.command else None,
                    "endpoint": self.evaluator.endpoint,
                    "epochs": self.evaluator.epochs,
                    "dataset": self.evaluator.dataset,
                    "timeout": self.evaluator.timeout,
                },
                "worker_count": self.worker_count,
                "out_dir": self.out_dir,
                "cache_path": self.cache_path,
                "input_shape": list(self.input_shape),
                "num_classes": self.num_classes,
            }
        )
        return data


def _reject_unknown(data: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def parse_run_config(data: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON object.

    Unknown keys are rejected; missing keys take the documented defaults.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "config")

    evo_kwargs = {k: data[k] for k in _EVOLUTION_KEYS if k in data}
    if "mutation_weights" in evo_kwargs:
        weights = evo_kwargs["mutation_weights"]
        if not isinstance(weights, dict):
            raise ConfigError("mutation_weights must be an object")
        _reject_unknown(weights, _WEIGHT_KEYS, "mutation_weights")
        try:
            evo_kwargs["mutation_weights"] = MutationWeights(**weights)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"mutation_weights: {exc}") from exc
    try:
        evolution = EvolutionConfig.from_dict(evo_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    spec_data = data.get("evaluator", {})
    if not isinstance(spec_data, dict):
        raise ConfigError("evaluator must be an object")
    _reject_unknown(spec_data, _EVALUATOR_KEYS, "evaluator")
    kind_name = spec_data.get("kind", "surrogate")
    try:
        kind = EvaluatorKind(kind_name)
    except ValueError:
        raise ConfigError(f"evaluator.kind must be 'surrogate' or 'external', got {kind_name!r}") from None
    command = spec_data.get("command")
    if command is not None and (
        not isinstance(command, list) or not all(isinstance(c, str) for c in command)
    ):
        raise ConfigError("evaluator.command must be a list of strings")
    try:
        evaluator = EvaluatorSpec(
            kind=kind,
            command=tuple(command) if command else None,
            endpoint=spec_data.get("endpoint"),
            epochs=spec_data.get("epochs", 1),
            dataset=spec_data.get("dataset", ""),
            timeout=spec_data.get("timeout"),
        )
    except ValueError as exc:
        raise ConfigError(f"evaluator: {exc}") from exc

    worker_count = data.get("worker_count", 1)
    if not isinstance(worker_count, int) or worker_count < 1:
        raise ConfigError(f"worker_count must be a positive integer, got {worker_count!r}")

    input_shape = data.get("input_shape", [32, 32, 3])
    if (
        not isinstance(input_shape, list)
        or len(input_shape) != 3
        or any(not isinstance(v, int) or v < 1 for v in input_shape)
    ):
        raise ConfigError(f"input_shape must be three positive integers, got {input_shape!r}")

    num_classes = data.get("num_classes", 10)
    if not isinstance(num_classes, int) or num_classes < 2:
        raise ConfigError(f"num_classes must be an integer >= 2, got {num_classes!r}")

    return RunConfig(
        evolution=evolution,
        evaluator=evaluator,
        worker_count=worker_count,
        out_dir=str(data.get("out_dir", "evoarch-out")),
        cache_path=data.get("cache_path"),
        input_shape=tuple(input_shape),
        num_classes=num_classes,
    )


def load_run_config(path: str | Path) -> RunConfig:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_run_config(data)


def _evaluator_factory(cfg: RunConfig):
    spec, shape, classes = cfg.evaluator, cfg.input_shape, cfg.num_classes
    return lambda: make_evaluator(spec, input_shape=shape, num_classes=classes)


def _write_run_artifacts(cfg: RunConfig, result: engine.RunResult, out_dir: Path) -> None:
    result.history.write_csv(out_dir / "history.csv")
    best = result.best
    engine.atomic_write_text(
        out_dir / "best.genome", canonical_serialize(best.genome).decode("ascii") + "\n"
    )
    try:
        arch = decode(best.genome, cfg.input_shape, cfg.num_classes)
    except GenomeValidationError as exc:
        print(f"note: best genome does not decode: {exc}", file=sys.stderr)
        return
    engine.atomic_write_text(
        out_dir / "best.arch.json", json.dumps(arch.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )


def _execute(cfg: RunConfig, resume_state=None, stop_after=None) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_path = cfg.cache_path or str(out_dir / "cache.txt")

    result = engine.run(
        cfg.evolution,
        _evaluator_factory(cfg),
        cfg.worker_count,
        input_shape=cfg.input_shape,
        num_classes=cfg.num_classes,
        epochs=cfg.evaluator.epochs,
        cache_path=cache_path,
        checkpoint_path=out_dir / "checkpoint.json",
        stop_after=stop_after,
        resume_state=resume_state,
        checkpoint_extra=cfg.to_dict(),
    )
    _write_run_artifacts(cfg, result, out_dir)
    print(
        f"best fitness {result.best.fitness!r} "
        f"(identifier {result.best.id}, {len(result.best.genome)} genes) "
        f"after {result.population.generation} generations; artifacts in {out_dir}"
    )
    return 0


def cmd_run(args) -> int:
    if args.resume:
        return _resume(args.resume, args)
    if not args.config:
        print("error: config: --config is required (or use --resume)", file=sys.stderr)
        return 2
    try:
        cfg = load_run_config(args.config)
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    try:
        return _execute(cfg, stop_after=args.stop_after)
    except EvaluatorUnavailableError as exc:
        print(f"error: transport: {exc}", file=sys.stderr)
        return 1


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.evolution = EvolutionConfig.from_dict(
            {**cfg.evolution.to_dict(), "rng_seed": args.seed}
        )
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise ConfigError(f"worker_count must be a positive integer, got {args.workers}")
        cfg.worker_count = args.workers
    if getattr(args, "evaluator", None) is not None:
        kind = EvaluatorKind(args.evaluator)
        try:
            cfg.evaluator = EvaluatorSpec(
                kind=kind,
                command=cfg.evaluator.command,
                endpoint=cfg.evaluator.endpoint,
                epochs=cfg.evaluator.epochs,
                dataset=cfg.evaluator.dataset,
                timeout=cfg.evaluator.timeout,
            )
        except ValueError as exc:
            raise ConfigError(f"evaluator: {exc}") from exc
    if getattr(args, "out_dir", None) is not None:
        cfg.out_dir = args.out_dir
    return cfg


def _resume(checkpoint_path: str, args) -> int:
    try:
        state = engine.load_checkpoint(checkpoint_path)
    except engine.CheckpointError as exc:
        print(f"error: checkpoint: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_run_config(state.run_config) if state.run_config else RunConfig(
            evolution=state.config
        )
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2

    if state.generation >= state.config.max_generations:
        print(
            f"run already complete at generation {state.generation}; nothing to resume"
        )
        return 0
    try:
        return _execute(cfg, resume_state=state, stop_after=getattr(args, "stop_after", None))
    except EvaluatorUnavailableError as exc:
        print(f"error: transport: {exc}", file=sys.stderr)
        return 1


def cmd_resume(args) -> int:
    return _resume(args.checkpoint, args)


def cmd_decode(args) -> int:
    try:
        shape = tuple(int(v) for v in args.input_shape.split(","))
        if len(shape) != 3 or any(v < 1 for v in shape):
            raise ValueError
    except ValueError:
        print(f"error: config: input shape must be H,W,C, got {args.input_shape!r}", file=sys.stderr)
        return 2
    try:
        genome = parse_genome(args.genome)
    except GenomeParseError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
        return 2
    try:
        arch = decode(genome, shape, args.num_classes)
    except (GenomeValidationError, ValueError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(arch.to_json_dict(), sort_keys=True))
    print(f"parameters: {count_parameters(arch)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evoarch",
        description="evolutionary search over variable-length CNN architectures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a search from a config file")
    p_run.add_argument("--config", help="path to the JSON run config")
    p_run.add_argument("--seed", type=int, help="override the config rng_seed")
    p_run.add_argument("--workers", type=int, help="override worker_count")
    p_run.add_argument("--evaluator", choices=["surrogate", "external"], help="override evaluator kind")
    p_run.add_argument("--out-dir", help="override the output directory")
    p_run.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint instead")
    p_run.add_argument("--stop-after", type=int, help=argparse.SUPPRESS)  # testing hook
    p_run.set_defaults(func=cmd_run)

    p_resume = sub.add_parser("resume", help="continue a checkpointed search")
    p_resume.add_argument("checkpoint", help="path to checkpoint.json")
    p_resume.add_argument("--workers", type=int, help="override worker_count")
    p_resume.add_argument("--out-dir", help="override the output directory")
    p_resume.add_argument("--stop-after", type=int, help=argparse.SUPPRESS)
    p_resume.set_defaults(func=cmd_resume)

    p_decode = sub.add_parser("decode", help="decode a genome string and count parameters")
    p_decode.add_argument("genome", help="canonical genome text, e.g. S:64:128-P:max")
    p_decode.add_argument("--input-shape", default="32,32,3", help="input H,W,C (default 32,32,3)")
    p_decode.add_argument("--num-classes", type=int, default=10)
    p_decode.set_defaults(func=cmd_decode)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
