"""Desk-scale learning tasks: local gradient oracles and data partitioning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

TASK_KINDS = ("quadratic", "logistic")
PARTITION_MODES = ("iid", "shards")


class TaskError(ValueError):
    """Invalid task definition, dataset or partition."""


@dataclass(frozen=True)
class Dataset:
    """Pooled samples; one row of ``features`` per sample."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise TaskError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise TaskError(f"labels shape {self.labels.shape} does not match {self.features.shape[0]} samples")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(features=self.features[index], labels=self.labels[index])


@dataclass(frozen=True)
class ModelParams:
    values: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise TaskError("model parameters must be finite")

    @classmethod
    def zeros(cls, dimension: int) -> "ModelParams":
        return cls(values=np.zeros(dimension, dtype=float))

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


Vector = Union[np.ndarray, ModelParams, Sequence[float]]


@dataclass(frozen=True)
class Task:
    """Per-worker datasets with a loss family.

    quadratic: F(x; b) = (curvature/2)·‖x − b‖², samples are target rows b.
    logistic: F(x; (z, y)) = log(1 + exp(−y·xᵀz)) + (λ/2)‖x‖², y in {−1,+1}.
    """

    kind: str
    dimension: int
    datasets: Tuple[Dataset, ...]
    regularization: float = 0.0
    curvature: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise TaskError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if self.dimension < 1:
            raise TaskError(f"dimension must be >= 1, got {self.dimension}")
        if not self.datasets:
            raise TaskError("task needs at least one worker dataset")
        for i, data in enumerate(self.datasets):
            if len(data) < 1:
                raise TaskError(f"worker {i} has an empty dataset")
            if data.features.shape[1] != self.dimension:
                raise TaskError(
                    f"worker {i} features have dimension {data.features.shape[1]}, expected {self.dimension}"
                )
            if self.kind == "logistic" and not np.all(np.abs(data.labels) == 1.0):
                raise TaskError(f"worker {i} logistic labels must be -1 or +1; build_task maps other encodings")
        if self.regularization < 0:
            raise TaskError(f"regularization must be >= 0, got {self.regularization}")
        if not self.curvature > 0:
            raise TaskError(f"curvature must be > 0, got {self.curvature}")

    @property
    def n_workers(self) -> int:
        return len(self.datasets)


@dataclass(frozen=True)
class QuadraticConstants:
    lipschitz: float
    sigma_f: float
    zeta: float
    optimum: np.ndarray
    f_star: float


def _as_vector(x: Vector, dimension: int) -> np.ndarray:
    values = x.values if isinstance(x, ModelParams) else x
    vector = np.asarray(values, dtype=float)
    if vector.shape != (dimension,):
        raise TaskError(f"parameter shape {vector.shape} != ({dimension},)")
    return vector


def _batch_grad(task: Task, data: Dataset, index: np.ndarray, x: np.ndarray) -> np.ndarray:
    if task.kind == "quadratic":
        return task.curvature * (x - data.features[index].mean(axis=0))
    z = data.features[index]
    y = data.labels[index]
    weights = -y * expit(-y * (z @ x))
    return (weights[:, None] * z).mean(axis=0) + task.regularization * x


def _full_loss(task: Task, data: Dataset, x: np.ndarray) -> float:
    if task.kind == "quadratic":
        residual = x[None, :] - data.features
        return float(0.5 * task.curvature * np.mean(np.sum(residual**2, axis=1)))
    margins = data.labels * (data.features @ x)
    return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * task.regularization * float(x @ x))


def sample_and_grad(
    task: Task,
    worker: int,
    x: Vector,
    rng: np.random.Generator,
    batch_size: int = 1,
) -> np.ndarray:
    """Draw ξ uniformly from worker's data with ``rng`` and return ∇F_i(x; ξ)."""

    if not 0 <= worker < task.n_workers:
        raise TaskError(f"worker {worker} out of range for {task.n_workers} workers")
    if batch_size < 1:
        raise TaskError(f"batch_size must be >= 1, got {batch_size}")
    data = task.datasets[worker]
    if len(data) == 0:
        raise TaskError(f"worker {worker} has an empty dataset")
    index = rng.integers(0, len(data), size=batch_size)
    return _batch_grad(task, data, index, _as_vector(x, task.dimension))


def local_grad(task: Task, worker: int, x: Vector) -> np.ndarray:
    """Full-batch ∇f_i(x) over worker's dataset."""

    data = task.datasets[worker]
    return _batch_grad(task, data, np.arange(len(data)), _as_vector(x, task.dimension))


def global_grad(task: Task, x: Vector) -> np.ndarray:
    """∇f(x) = (1/N)·Σ_i ∇f_i(x); metrics only."""

    vector = _as_vector(x, task.dimension)
    grads = [local_grad(task, i, vector) for i in range(task.n_workers)]
    return np.mean(grads, axis=0)


def global_loss(task: Task, x: Vector) -> float:
    vector = _as_vector(x, task.dimension)
    return math.fsum(_full_loss(task, data, vector) for data in task.datasets) / task.n_workers


def partition_data(dataset: Dataset, n: int, mode: str = "iid", seed: int = 0) -> List[Dataset]:
    """Split a pooled dataset across n workers.

    iid shuffles with ``seed`` and splits into near-equal parts; shards
    sorts by label (stable) and splits contiguously, so each worker sees
    few labels. Every sample lands on exactly one worker.
    """

    if mode not in PARTITION_MODES:
        raise TaskError(f"unknown partition mode {mode!r}; expected one of {PARTITION_MODES}")
    if n < 1:
        raise TaskError(f"number of workers must be >= 1, got {n}")
    if n > len(dataset):
        raise TaskError(f"cannot split {len(dataset)} samples across {n} workers")

    if mode == "iid":
        order = np.random.default_rng(seed).permutation(len(dataset))
    else:
        order = np.argsort(dataset.labels, kind="stable")
    return [dataset.subset(part) for part in np.array_split(order, n)]


def build_task(
    kind: str,
    parts: Sequence[Dataset],
    regularization: float = 0.0,
    curvature: float = 1.0,
) -> Task:
    if not parts:
        raise TaskError("build_task needs at least one partition")
    dimension = int(parts[0].features.shape[1])
    if kind == "logistic":
        parts = [Dataset(p.features, np.where(p.labels > 0, 1.0, -1.0)) for p in parts]
    return Task(
        kind=kind,
        dimension=dimension,
        datasets=tuple(parts),
        regularization=regularization,
        curvature=curvature,
    )


def make_quadratic_dataset(
    n_samples: int,
    dimension: int,
    n_clusters: int,
    rng: np.random.Generator,
    heterogeneity: float = 1.0,
    spread: float = 1.0,
    offset: float = 0.0,
) -> Dataset:
    """Targets b scattered around ``n_clusters`` centers; label = cluster id.

    ``offset`` shifts every target along the ones vector, moving the optimum
    away from the zero start.
    """

    if n_samples < 1 or n_clusters < 1:
        raise TaskError("quadratic dataset needs at least one sample and one cluster")
    centers = offset + rng.normal(0.0, heterogeneity, size=(n_clusters, dimension))
    labels = np.arange(n_samples) % n_clusters
    features = centers[labels] + rng.normal(0.0, spread, size=(n_samples, dimension))
    return Dataset(features=features, labels=labels.astype(float))


def make_logistic_dataset(
    n_samples: int,
    dimension: int,
    rng: np.random.Generator,
    label_noise: float = 0.1,
) -> Dataset:
    """Linearly generated binary labels with ``label_noise`` flips."""

    if n_samples < 1:
        raise TaskError("logistic dataset needs at least one sample")
    truth = rng.normal(0.0, 1.0, size=dimension)
    features = rng.normal(0.0, 1.0, size=(n_samples, dimension))
    labels = (features @ truth > 0).astype(float)
    flips = rng.random(n_samples) < label_noise
    labels[flips] = 1.0 - labels[flips]
    return Dataset(features=features, labels=labels)


def load_dataset_csv(path: Union[str, Path]) -> Dataset:
    """Load ``features..., label`` rows; the first line must be a header."""

    file_path = Path(path)
    if not file_path.exists():
        raise TaskError(f"dataset not found: {file_path}")
    with file_path.open(encoding="utf-8") as handle:
        header = handle.readline().strip()
    columns = [item.strip() for item in header.split(",")]
    if len(columns) < 2 or any(_is_number(item) for item in columns):
        raise TaskError(f"{file_path}: first line must be a header naming features then label")
    try:
        rows = np.loadtxt(file_path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise TaskError(f"{file_path}: malformed row: {exc}") from exc
    if rows.shape[0] == 0:
        raise TaskError(f"{file_path}: no samples")
    if rows.shape[1] != len(columns):
        raise TaskError(f"{file_path}: rows have {rows.shape[1]} columns, header has {len(columns)}")
    return Dataset(features=rows[:, :-1], labels=rows[:, -1])


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def quadratic_constants(task: Task, batch_size: int = 1) -> QuadraticConstants:
    """Exact smoothness, variance and heterogeneity constants of a quadratic task."""

    if task.kind != "quadratic":
        raise TaskError("closed-form constants exist only for the quadratic task")
    lipschitz = task.curvature
    means = np.stack([data.features.mean(axis=0) for data in task.datasets])
    spreads = [
        float(np.mean(np.sum((data.features - means[i]) ** 2, axis=1)))
        for i, data in enumerate(task.datasets)
    ]
    optimum = means.mean(axis=0)
    sigma_f = lipschitz * math.sqrt(max(spreads) / batch_size)
    zeta = lipschitz * math.sqrt(float(np.mean(np.sum((means - optimum) ** 2, axis=1))))
    return QuadraticConstants(
        lipschitz=lipschitz,
        sigma_f=sigma_f,
        zeta=zeta,
        optimum=optimum,
        f_star=global_loss(task, optimum),
    )
