"""Configurable misbehaving protocol worker for evaluator transport tests.

Answers like the surrogate worker unless told otherwise:
  --record FILE     append every received request line to FILE
  --die-after N     exit after sending N responses
  --sleep SECONDS   sleep before each response
  --garbage         respond with a non-JSON line
  --always-error    respond with status "error"
"""

import argparse
import json
import os
import sys
import time

from evoarch.evaluators import surrogate_fitness
from evoarch.genome import parse_genome


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--record")
    parser.add_argument("--die-after", type=int)
    parser.add_argument("--sleep", type=float, default=0.0)
    parser.add_argument("--garbage", action="store_true")
    parser.add_argument("--always-error", action="store_true")
    args = parser.parse_args()

    sent = 0
    for line in sys.stdin:
        if not line.strip():
            continue
        if args.record:
            with open(args.record, "a", encoding="utf-8") as handle:
                handle.write(f"{os.getpid()} {line}")
        if args.sleep:
            time.sleep(args.sleep)
        request = json.loads(line)
        if args.garbage:
            response = "this is not json"
        elif args.always_error:
            response = json.dumps(
                {"job_id": request["job_id"], "status": "error", "message": "synthetic failure"}
            )
        else:
            fitness = surrogate_fitness(parse_genome(request["genome"]))
            response = json.dumps({"job_id": request["job_id"], "status": "ok", "fitness": fitness})
        sys.stdout.write(response + "\n")
        sys.stdout.flush()
        sent += 1
        if args.die_after is not None and sent >= args.die_after:
            return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
