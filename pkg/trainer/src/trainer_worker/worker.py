"""Protocol worker: one training job per request line, one response line back.

Requests follow the search engine's wire format:

    {"job_id": str, "genome": str, "arch": {...}, "epochs": int,
     "seed": int, "dataset": str}

The worker builds the network described by ``arch``, trains it per the
standard plan with the request's epoch budget and seed, and answers

    {"job_id": ..., "status": "ok", "fitness": <best validation accuracy>,
     "message": "init=...; best_epoch=i/n"}

Any build or training failure (impossible architectures included) becomes
a status "error" response carrying the exception text; the worker never
crashes on a bad request.  Runs until stdin closes, or serves the same
line protocol on TCP with --listen.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from dataclasses import dataclass

import torch

from .arch import build_network
from .data import load
from .training import TrainingPlan, train_and_score


@dataclass
class WorkerSettings:
    device: str = "cpu"
    data_root: str = "./data"
    batch_size: int = 128
    wire_log: str | None = None


def handle_request(line: str, settings: WorkerSettings) -> str:
    job_id = None
    try:
        request = json.loads(line)
        job_id = request.get("job_id")
        epochs = request["epochs"]
        if not isinstance(epochs, int) or epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {epochs!r}")

        # seed before construction so weight init is part of the job's seed
        torch.manual_seed(request["seed"] % 2**63)
        net = build_network(request["arch"])
        images, labels = load(request["dataset"], settings.data_root)
        plan = TrainingPlan(batch_size=settings.batch_size)
        outcome = train_and_score(
            net, images, labels, epochs, request["seed"], plan, settings.device
        )
        return json.dumps(
            {
                "job_id": job_id,
                "status": "ok",
                "fitness": outcome.best_accuracy,
                "message": (
                    f"init=kaiming_normal(relu); "
                    f"best_epoch={outcome.best_epoch}/{epochs}"
                ),
            }
        )
    except Exception as exc:
        return json.dumps({"job_id": job_id, "status": "error", "message": str(exc)})


def _log_line(settings: WorkerSettings, direction: str, line: str) -> None:
    if settings.wire_log:
        with open(settings.wire_log, "a", encoding="utf-8") as handle:
            handle.write(f"{direction} {line.rstrip()}\n")


def serve(reader, writer, settings: WorkerSettings) -> None:
    for line in reader:
        if not line.strip():
            continue
        _log_line(settings, ">", line)
        response = handle_request(line, settings)
        _log_line(settings, "<", response)
        writer.write(response + "\n")
        writer.flush()


def serve_tcp(endpoint: str, settings: WorkerSettings) -> None:
    host, _, port = endpoint.rpartition(":")
    with socket.create_server((host, int(port))) as server:
        print(f"listening on {host}:{server.getsockname()[1]}", file=sys.stderr, flush=True)
        while True:
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as stream:
                serve(stream, stream, settings)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="training worker for the evoarch wire protocol")
    parser.add_argument("--device", default="cpu", help="compute device (cpu, cuda, cuda:0, ...)")
    parser.add_argument("--data-root", default="./data", help="dataset directory for cifar10")
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--threads", type=int, default=0,
                        help="torch CPU threads (0 leaves the default)")
    parser.add_argument("--listen", metavar="HOST:PORT", help="serve over TCP instead of stdio")
    parser.add_argument("--wire-log", help="append raw request/response lines to this file")
    args = parser.parse_args(argv)

    if args.threads > 0:
        torch.set_num_threads(args.threads)
    settings = WorkerSettings(
        device=args.device,
        data_root=args.data_root,
        batch_size=args.batch_size,
        wire_log=args.wire_log,
    )
    if args.listen:
        serve_tcp(args.listen, settings)
    else:
        serve(sys.stdin, sys.stdout, settings)
    return 0


if __name__ == "__main__":
    sys.exit(main())
