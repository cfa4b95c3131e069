"""Wire-protocol conformance against a live worker subprocess."""

import json
import subprocess
import sys
from queue import Empty, Queue
from threading import Thread

import pytest

from conftest import skip_arch

WORKER_CMD = [sys.executable, "-m", "trainer_worker", "--threads", "1"]


class WorkerProcess:
    def __init__(self, extra_args=()):
        self.proc = subprocess.Popen(
            WORKER_CMD + list(extra_args),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines: Queue = Queue()
        Thread(target=self._pump, daemon=True).start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)

    def send(self, payload) -> None:
        line = payload if isinstance(payload, str) else json.dumps(payload)
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout=120) -> dict:
        return json.loads(self._lines.get(timeout=timeout))

    def assert_silent(self, timeout=0.5) -> None:
        with pytest.raises(Empty):
            self._lines.get(timeout=timeout)

    def close(self):
        self.proc.stdin.close()
        self.proc.wait(timeout=10)


@pytest.fixture
def worker():
    process = WorkerProcess()
    yield process
    process.close()


def request(job_id, arch=None, epochs=1, dataset="synthetic:300", seed=99):
    return {
        "job_id": job_id,
        "genome": "S:16:16",
        "arch": arch if arch is not None else skip_arch(channels=8),
        "epochs": epochs,
        "seed": seed,
        "dataset": dataset,
    }


def test_ok_response_matches_job_id(worker):
    worker.send(request("job-ok"))
    response = worker.recv()
    assert response["job_id"] == "job-ok"
    assert response["status"] == "ok"
    assert 0.0 <= response["fitness"] <= 1.0
    assert "best_epoch" in response["message"]
    worker.assert_silent()  # exactly one response per request


def test_zero_epochs_is_error(worker):
    worker.send(request("job-zero", epochs=0))
    response = worker.recv()
    assert response["job_id"] == "job-zero"
    assert response["status"] == "error"
    assert "epochs" in response["message"]


def test_pool_bound_violation_is_error(worker):
    bad_arch = {
        "input_shape": [32, 32, 3],
        "blocks": [{"kind": "pool", "pool_type": "max"} for _ in range(6)],
        "head": {"pool": "global_average", "in_features": 3, "num_classes": 10,
                 "activation": "softmax"},
        "num_classes": 10,
    }
    worker.send(request("job-pools", arch=bad_arch))
    response = worker.recv()
    assert response["status"] == "error"
    assert response["job_id"] == "job-pools"


def test_unknown_dataset_is_error(worker):
    worker.send(request("job-data", dataset="imagenet"))
    response = worker.recv()
    assert response["status"] == "error"
    assert "dataset" in response["message"]


def test_malformed_line_is_error_not_crash(worker):
    worker.send("{this is not json")
    response = worker.recv()
    assert response["status"] == "error"
    assert response["job_id"] is None
    # worker is still alive and serves the next request
    worker.send(request("job-after"))
    assert worker.recv()["job_id"] == "job-after"


def test_one_response_per_request_in_order(worker):
    for i in range(3):
        worker.send(request(f"job-{i}", epochs=0))  # error path: instant
    ids = [worker.recv()["job_id"] for i in range(3)]
    assert ids == ["job-0", "job-1", "job-2"]
    worker.assert_silent()


def test_reported_fitness_is_best_epoch_accuracy(worker):
    worker.send(request("job-best", epochs=2, seed=1234))
    response = worker.recv()
    assert response["status"] == "ok"
    best_epoch = int(response["message"].split("best_epoch=")[1].split("/")[0])
    assert 1 <= best_epoch <= 2
