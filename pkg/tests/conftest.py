"""Shared builders for the test suite."""

import numpy as np
import pytest

from multiknock import ColumnInfo, DatasetView, Family, GroupPartition


def make_view(X, y, family=Family.GAUSSIAN, partition=None, columns=None,
              dataset_id="d0"):
    X = np.asarray(X, dtype=float)
    if partition is None:
        partition = GroupPartition.singleton(X.shape[1])
    if columns is None:
        columns = tuple(ColumnInfo(name=f"x{j:04d}") for j in range(X.shape[1]))
    return DatasetView(X=X, y=np.asarray(y, dtype=float), family=family,
                       partition=partition, columns=columns,
                       dataset_id=dataset_id)


def gaussian_instance(seed, n=60, n_groups=4, group_size=3, signal=(0,),
                      amplitude=1.0, noise=1.0):
    """Standardizable gaussian dataset with signals on whole groups."""

    rng = np.random.default_rng(seed)
    part = GroupPartition.contiguous(n_groups, group_size)
    p = part.p
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    for m in signal:
        beta[list(part.groups[m])] = amplitude
    y = X @ beta + noise * rng.standard_normal(n)
    return make_view(X, y, partition=part)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
