import numpy as np
import pytest

from annotriage.core import TaskKind, TaskSpec


@pytest.fixture
def binary_task():
    return TaskSpec(TaskKind.BINARY, 2, 4)


@pytest.fixture
def multiclass_task():
    return TaskSpec(TaskKind.MULTICLASS, 5, 6)


@pytest.fixture
def multilabel_task():
    return TaskSpec(TaskKind.MULTILABEL, 20, 8, top_k_eval=10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def flat_grads(grads):
    """Flatten a per-layer gradient list in params_flat order."""
    return np.concatenate(
        [dw.ravel() for dw, _ in grads] + [db.ravel() for _, db in grads]
    )


def central_diff(fn, x0, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xp.flat[i] += h
        xm = x0.copy()
        xm.flat[i] -= h
        g.flat[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


def rel_err(a, b):
    """Relative error between two gradient vectors."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    denom = max(na, nb, 1e-300)
    return np.linalg.norm(a - b) / denom
