"""Reference wire-protocol worker answering with the surrogate fitness.

Runs as ``python -m evoarch.surrogate_worker``: reads one JSON request per
line from stdin and writes one JSON response per line to stdout, until the
input closes.  With ``--listen host:port`` it serves the same line protocol
over TCP (one connection at a time) instead.

An engine pointed at this worker must produce exactly the trajectory of an
in-process surrogate run, which makes it the standing test double for the
external-evaluator path.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys

from .evaluators import surrogate_fitness
from .genome import parse_genome


def handle_request(line: str) -> str:
    """Map one request line to one response line; never raises."""
    job_id = None
    try:
        request = json.loads(line)
        job_id = request.get("job_id")
        fitness = surrogate_fitness(parse_genome(request["genome"]))
        return json.dumps({"job_id": job_id, "status": "ok", "fitness": fitness})
    except Exception as exc:
        return json.dumps({"job_id": job_id, "status": "error", "message": str(exc)})


def serve_stream(reader, writer) -> None:
    for line in reader:
        if not line.strip():
            continue
        writer.write(handle_request(line) + "\n")
        writer.flush()


def serve_tcp(endpoint: str) -> None:
    host, _, port = endpoint.rpartition(":")
    with socket.create_server((host, int(port))) as server:
        # report the bound port (port 0 picks an ephemeral one)
        print(f"listening on {host}:{server.getsockname()[1]}", file=sys.stderr, flush=True)
        while True:
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as stream:
                serve_stream(stream, stream)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="surrogate-fitness protocol worker")
    parser.add_argument("--listen", metavar="HOST:PORT", help="serve over TCP instead of stdio")
    args = parser.parse_args(argv)
    if args.listen:
        serve_tcp(args.listen)
    else:
        serve_stream(sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
