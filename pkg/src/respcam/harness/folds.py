"""Subject-wise cross-validation folds and exhaustive split enumeration."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from ..errors import ConfigurationError


@dataclass(frozen=True)
class FoldSpec:
    fold_index: int
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        groups = (set(self.train), set(self.val), set(self.test))
        total = len(self.train) + len(self.val) + len(self.test)
        if len(groups[0] | groups[1] | groups[2]) != total:
            raise ConfigurationError(f"fold {self.fold_index} has overlapping subject sets")

    def to_dict(self) -> dict:
        return {
            "fold_index": self.fold_index,
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
        }


def make_folds(subjects: list[str], k: int, sizes: tuple[int, int, int], seed: int,
               ) -> list[FoldSpec]:
    """k folds with disjoint (train, val, test) subject sets of fixed sizes.

    Subjects are sorted, shuffled once by ``seed``, then test (and val) blocks
    rotate by the test size, so for k * test_size >= n every subject is
    tested at least once; when the blocks tile n exactly (18 subjects, 6
    folds of 3) the test sets partition the subjects. Deterministic for a
    given seed regardless of the input order.
    """
    n = len(subjects)
    n_train, n_val, n_test = sizes
    if min(sizes) < 0 or n_test < 1:
        raise ConfigurationError(f"bad fold sizes {sizes}")
    if n_train + n_val + n_test != n:
        raise ConfigurationError(f"fold sizes {sizes} do not sum to {n} subjects")
    if len(set(subjects)) != n:
        raise ConfigurationError("duplicate subject ids")
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")

    order = sorted(subjects)
    random.Random(seed).shuffle(order)

    folds = []
    for i in range(k):
        start = i * n_test
        picked = [order[(start + j) % n] for j in range(n_test + n_val)]
        test = tuple(picked[:n_test])
        val = tuple(picked[n_test:])
        chosen = set(picked)
        train = tuple(s for s in order if s not in chosen)
        folds.append(FoldSpec(fold_index=i, train=train, val=val, test=test))
    return folds


def enumerate_splits(subjects: int | list[str], n_train: int, n_val: int,
                     ) -> list[tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]]:
    """Every (train, val, test) split for the exhaustive reproducibility study.

    ``n_train`` subjects are selected for training and each choice of
    ``n_val`` of them is held out for validation, so the emitted train set
    has n_train - n_val subjects and the test set is everything unselected:
    C(n, n_train) * C(n_train, n_val) splits, in lexicographic order.
    """
    ids = [f"S{i + 1:02d}" for i in range(subjects)] if isinstance(subjects, int) else sorted(subjects)
    n = len(ids)
    if not 0 < n_val < n_train:
        raise ConfigurationError(
            f"need 0 < n_val < n_train for a non-empty train set, got {n_train}, {n_val}"
        )
    if n_train >= n:
        raise ConfigurationError(f"n_train={n_train} leaves no test subjects out of {n}")

    splits = []
    for pool in itertools.combinations(ids, n_train):
        rest = tuple(s for s in ids if s not in pool)
        for val in itertools.combinations(pool, n_val):
            train = tuple(s for s in pool if s not in val)
            splits.append((train, val, rest))
    return splits
