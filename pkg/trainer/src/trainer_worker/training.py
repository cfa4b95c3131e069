"""Training routine for one evaluation job.

The plan mirrors the conventional residual-network recipe: SGD with
learning rate 0.1 and momentum 0.9, the rate multiplied by 0.1 after
epochs 1, 149 and 249 (applied literally, so the rate already drops to
0.01 after the first epoch; milestones beyond the job's epoch budget
never fire), a 90/10 train/validation split, and pad-4 zero padding with
a random 32x32 crop and probability-0.5 horizontal flip on the training
split only.  The reported score is the best per-epoch validation
accuracy, never the final epoch's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class TrainingPlan:
    learning_rate: float = 0.1
    momentum: float = 0.9
    lr_decay_epochs: tuple[int, ...] = (1, 149, 249)
    lr_decay_factor: float = 0.1
    validation_fraction: float = 0.1
    batch_size: int = 128
    pad_pixels: int = 4
    flip_probability: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie strictly between 0 and 1")
        if list(self.lr_decay_epochs) != sorted(set(self.lr_decay_epochs)):
            raise ValueError("lr_decay_epochs must be strictly increasing")
        if any(e < 1 for e in self.lr_decay_epochs):
            raise ValueError("lr_decay_epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainOutcome:
    best_accuracy: float
    best_epoch: int  # 1-based
    epoch_accuracies: list[float]
    lr_trace: list[float]  # learning rate used during each epoch


def _augment(batch: torch.Tensor, plan: TrainingPlan) -> torch.Tensor:
    pad = plan.pad_pixels
    size = batch.shape[-1]
    padded = F.pad(batch, (pad, pad, pad, pad))
    offsets = torch.randint(0, 2 * pad + 1, (batch.shape[0], 2))
    cropped = torch.stack(
        [
            padded[i, :, dy : dy + size, dx : dx + size]
            for i, (dy, dx) in enumerate(offsets.tolist())
        ]
    )
    flip = torch.rand(batch.shape[0]) < plan.flip_probability
    cropped[flip] = cropped[flip].flip(-1)
    return cropped


@torch.no_grad()
def _accuracy(net: nn.Module, images: torch.Tensor, labels: torch.Tensor,
              batch_size: int) -> float:
    net.eval()
    correct = 0
    for start in range(0, len(images), batch_size):
        logits = net(images[start : start + batch_size])
        correct += (logits.argmax(dim=1) == labels[start : start + batch_size]).sum().item()
    return correct / len(images)


def train_and_score(
    net: nn.Module,
    images: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    seed: int,
    plan: TrainingPlan = TrainingPlan(),
    device: str = "cpu",
) -> TrainOutcome:
    """Train for the given epoch budget, scoring each epoch on the held-out
    split; returns the best accuracy seen and the full per-epoch record."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")

    torch.manual_seed(seed % 2**63)
    split_rng = np.random.default_rng(seed)
    order = split_rng.permutation(len(images))
    n_val = max(1, round(len(images) * plan.validation_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]

    device_t = torch.device(device)
    net = net.to(device_t)
    x_train = torch.from_numpy(images[train_idx]).to(device_t)
    y_train = torch.from_numpy(labels[train_idx]).to(device_t)
    x_val = torch.from_numpy(images[val_idx]).to(device_t)
    y_val = torch.from_numpy(labels[val_idx]).to(device_t)

    optimizer = torch.optim.SGD(net.parameters(), lr=plan.learning_rate, momentum=plan.momentum)
    scheduler = torch.optim.lr_scheduler.MultiStepLR(
        optimizer, milestones=list(plan.lr_decay_epochs), gamma=plan.lr_decay_factor
    )
    criterion = nn.CrossEntropyLoss()

    best_accuracy = 0.0
    best_epoch = 0
    epoch_accuracies: list[float] = []
    lr_trace: list[float] = []
    for epoch in range(1, epochs + 1):
        lr_trace.append(optimizer.param_groups[0]["lr"])
        net.train()
        shuffle = torch.randperm(len(x_train), device=device_t)
        for start in range(0, len(x_train), plan.batch_size):
            batch = shuffle[start : start + plan.batch_size]
            inputs = _augment(x_train[batch], plan)
            optimizer.zero_grad()
            loss = criterion(net(inputs), y_train[batch])
            loss.backward()
            optimizer.step()
        scheduler.step()

        accuracy = _accuracy(net, x_val, y_val, plan.batch_size)
        epoch_accuracies.append(accuracy)
        if accuracy > best_accuracy:
            best_accuracy = accuracy
            best_epoch = epoch

    return TrainOutcome(
        best_accuracy=best_accuracy,
        best_epoch=best_epoch,
        epoch_accuracies=epoch_accuracies,
        lr_trace=lr_trace,
    )
