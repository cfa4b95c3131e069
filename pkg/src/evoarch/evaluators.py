"""Fitness evaluators and the external-trainer wire protocol.

Two evaluator kinds exist.  The surrogate is a deterministic closed-form
score used for desk-scale verification of the search loop.  External
evaluators hand each job to a trainer process over a newline-delimited
JSON protocol, either via the child's standard streams or a TCP endpoint;
both transports carry the identical line format:

    request:  {"job_id": str, "genome": str, "arch": {...}, "epochs": int,
               "seed": int, "dataset": str}
    response: {"job_id": str, "status": "ok"|"error",
               "fitness": float (when ok), "message": str (optional)}

One request line always produces exactly one response line.
"""

from __future__ import annotations

import json
import math
import queue
import socket
import subprocess
import sys
import threading
from dataclasses import dataclass
from enum import Enum

from .genome import Genome, SkipGene, decode


class EvaluatorKind(Enum):
    SURROGATE = "surrogate"
    EXTERNAL = "external"


class EvaluatorUnavailableError(RuntimeError):
    """The evaluator transport cannot be (re)established; the run must stop."""


@dataclass(frozen=True)
class EvaluatorSpec:
    """How fitness jobs are executed.

    EXTERNAL requires either ``command`` (argv of a child process speaking
    the protocol on stdin/stdout) or ``endpoint`` ("host:port").
    """

    kind: EvaluatorKind = EvaluatorKind.SURROGATE
    command: tuple[str, ...] | None = None
    endpoint: str | None = None
    epochs: int = 1
    dataset: str = ""
    timeout: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.kind is EvaluatorKind.EXTERNAL and not (self.command or self.endpoint):
            raise ValueError("external evaluator needs a command or an endpoint")
        if self.command is not None:
            object.__setattr__(self, "command", tuple(self.command))


@dataclass(frozen=True)
class EvaluationJob:
    job_id: str
    genome: Genome
    epochs: int
    seed: int


@dataclass(frozen=True)
class EvaluationResult:
    job_id: str
    fitness: float | None  # None marks an error; the engine applies the penalty
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.fitness is not None


def surrogate_fitness(genome: Genome) -> float:
    """Deterministic stand-in fitness with a known optimum.

    With n_s skip genes, n_p pool genes and q the fraction of skip genes
    whose f2 >= f1 (q = 0 without skips):

        0.5 * exp(-(n_s - 8)^2 / 8) + 0.3 * exp(-(n_p - 3)^2 / 2) + 0.2 * q

    The maximum 1.0 is attained exactly at n_s = 8, n_p = 3, q = 1, so
    reaching it requires depth control and parameter-level search at once.
    """
    skips = [g for g in genome if isinstance(g, SkipGene)]
    n_s = len(skips)
    n_p = len(genome) - n_s
    q = sum(1 for g in skips if g.f2 >= g.f1) / n_s if n_s else 0.0
    return (
        0.5 * math.exp(-((n_s - 8) ** 2) / 8)
        + 0.3 * math.exp(-((n_p - 3) ** 2) / 2)
        + 0.2 * q
    )


class SurrogateEvaluator:
    """In-process evaluator computing :func:`surrogate_fitness`."""

    def evaluate(self, job: EvaluationJob) -> EvaluationResult:
        return EvaluationResult(job.job_id, surrogate_fitness(job.genome))

    def close(self) -> None:
        pass


# --- wire protocol ---------------------------------------------------------


def encode_request(
    job: EvaluationJob,
    input_shape: tuple[int, int, int],
    num_classes: int,
    dataset: str,
) -> str:
    """Serialize one job to its single-line JSON request."""
    from .genome import canonical_serialize

    arch = decode(job.genome, input_shape, num_classes)
    payload = {
        "job_id": job.job_id,
        "genome": canonical_serialize(job.genome).decode("ascii"),
        "arch": arch.to_json_dict(),
        "epochs": job.epochs,
        "seed": job.seed,
        "dataset": dataset,
    }
    return json.dumps(payload, sort_keys=True)


def parse_response(line: str, job_id: str) -> EvaluationResult:
    """Turn one response line into an EvaluationResult.

    Malformed lines, mismatched job ids, and out-of-range fitness values
    all map to error results; they never raise.
    """
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        return EvaluationResult(job_id, None, f"malformed response: {exc}")
    if not isinstance(data, dict):
        return EvaluationResult(job_id, None, "malformed response: not an object")
    if data.get("job_id") != job_id:
        return EvaluationResult(job_id, None, f"response for wrong job_id {data.get('job_id')!r}")
    if data.get("status") == "ok":
        fitness = data.get("fitness")
        if isinstance(fitness, (int, float)) and 0.0 <= fitness <= 1.0:
            return EvaluationResult(job_id, float(fitness), str(data.get("message", "")))
        return EvaluationResult(job_id, None, f"fitness out of range: {fitness!r}")
    return EvaluationResult(job_id, None, str(data.get("message", "evaluator reported an error")))


class _TransportLost(Exception):
    """A send or receive failed mid-conversation; the connection is dead."""


class _LineTransport:
    """Common retry logic for the two line-based transports.

    A lost connection is re-established and the request re-sent once; a
    second loss yields an error result.  Failing to re-establish the
    transport at all raises :class:`EvaluatorUnavailableError` instead,
    which aborts the run.  Timeouts produce error results without retry.
    """

    def __init__(self, input_shape, num_classes, epochs, dataset, timeout):
        self.input_shape = input_shape
        self.num_classes = num_classes
        self.epochs = epochs
        self.dataset = dataset
        self.timeout = timeout

    def _send_line(self, line: str) -> None:
        raise NotImplementedError

    def _recv_line(self) -> str:
        """Return the next response line, raising _TransportLost on EOF and
        TimeoutError when the configured timeout elapses."""
        raise NotImplementedError

    def _reconnect(self) -> None:
        raise NotImplementedError

    def evaluate(self, job: EvaluationJob) -> EvaluationResult:
        request = encode_request(job, self.input_shape, self.num_classes, self.dataset)
        for attempt in (0, 1):
            try:
                self._send_line(request)
                line = self._recv_line()
            except TimeoutError:
                # A late response would poison the next job on this slot,
                # so drop the whole connection instead of just the job.
                self._reconnect()
                return EvaluationResult(job.job_id, None, f"evaluator timed out after {self.timeout}s")
            except _TransportLost as exc:
                if attempt == 0:
                    self._reconnect()  # may raise EvaluatorUnavailableError
                    continue
                return EvaluationResult(job.job_id, None, f"transport lost: {exc}")
            return parse_response(line, job.job_id)
        raise AssertionError("unreachable")

    def close(self) -> None:
        pass


class ProcessEvaluator(_LineTransport):
    """Evaluator backed by one child process speaking the protocol on its
    standard streams.  The process persists across jobs."""

    def __init__(
        self,
        command,
        input_shape=(32, 32, 3),
        num_classes=10,
        epochs=1,
        dataset="",
        timeout=None,
    ):
        super().__init__(input_shape, num_classes, epochs, dataset, timeout)
        self.command = list(command)
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._spawn()

    def _spawn(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=sys.stderr,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorUnavailableError(f"cannot spawn evaluator {self.command!r}: {exc}") from exc
        self._lines = queue.Queue()
        reader = threading.Thread(target=self._read_loop, args=(self._proc,), daemon=True)
        reader.start()

    def _read_loop(self, proc: subprocess.Popen) -> None:
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def _send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise _TransportLost(str(exc)) from exc

    def _recv_line(self) -> str:
        while True:
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise TimeoutError from None
            if line is None:
                raise _TransportLost("evaluator process closed its output")
            if line.strip():
                return line

    def _reconnect(self) -> None:
        # the old process may be wedged; do not wait for a graceful exit
        self._shutdown(grace=0)
        self._spawn()

    def _shutdown(self, grace: float) -> None:
        if self._proc is None:
            return
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=grace)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def close(self) -> None:
        self._shutdown(grace=1.0)


class TcpEvaluator(_LineTransport):
    """Evaluator backed by one TCP connection to a trainer endpoint."""

    def __init__(
        self,
        endpoint: str,
        input_shape=(32, 32, 3),
        num_classes=10,
        epochs=1,
        dataset="",
        timeout=None,
    ):
        super().__init__(input_shape, num_classes, epochs, dataset, timeout)
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
        self.address = (host, int(port))
        self._sock: socket.socket | None = None
        self._file = None
        self._connect()

    def _connect(self) -> None:
        try:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
            self._sock.settimeout(self.timeout)
            self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")
        except OSError as exc:
            raise EvaluatorUnavailableError(
                f"cannot connect to evaluator at {self.address[0]}:{self.address[1]}: {exc}"
            ) from exc

    def _send_line(self, line: str) -> None:
        try:
            self._file.write(line + "\n")
            self._file.flush()
        except OSError as exc:
            raise _TransportLost(str(exc)) from exc

    def _recv_line(self) -> str:
        while True:
            try:
                line = self._file.readline()
            except socket.timeout:
                raise TimeoutError from None
            except OSError as exc:
                raise _TransportLost(str(exc)) from exc
            if line == "":
                raise _TransportLost("evaluator closed the connection")
            if line.strip():
                return line

    def _reconnect(self) -> None:
        self.close()
        self._connect()

    def close(self) -> None:
        if self._sock is None:
            return
        try:
            self._file.close()
            self._sock.close()
        except OSError:
            pass
        self._sock = None


def external_evaluate(job: EvaluationJob, spec: EvaluatorSpec, **kwargs) -> EvaluationResult:
    """One-shot convenience: evaluate a single job against an external spec."""
    evaluator = make_evaluator(spec, **kwargs)
    try:
        return evaluator.evaluate(job)
    finally:
        evaluator.close()


def make_evaluator(spec: EvaluatorSpec, input_shape=(32, 32, 3), num_classes=10):
    """Build one evaluator slot for the given spec."""
    if spec.kind is EvaluatorKind.SURROGATE:
        return SurrogateEvaluator()
    common = dict(
        input_shape=input_shape,
        num_classes=num_classes,
        epochs=spec.epochs,
        dataset=spec.dataset,
        timeout=spec.timeout,
    )
    if spec.command:
        return ProcessEvaluator(spec.command, **common)
    return TcpEvaluator(spec.endpoint, **common)
