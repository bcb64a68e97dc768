"""Named numeric datasets, index-set bookkeeping, and the model/loss contracts.

Everything downstream (samplers, the importance engine, the experiment
runner) addresses columns by name rather than by position, so a
conditioning set may refer to variables that are not model features
without any index arithmetic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

TRAIN = "train"
TEST = "test"

# Fixed tweak mixed into the seed so the split stream never collides with
# noise streams derived from the same user seed.
_SPLIT_STREAM = 0x5B1D


class SchemaError(ValueError):
    """A referenced column is missing, duplicated, or malformed."""


class InvalidPartitionError(ValueError):
    """Index sets violate the partition rules."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-named numeric data with a train/test row split.

    ``values`` holds one row per observation, one column per variable in
    ``variable_names`` order. ``test_mask`` marks evaluation rows; the two
    row sets are disjoint and exhaustive by construction. Arrays are locked
    read-only so instances can be shared across concurrent workers.
    """

    variable_names: tuple[str, ...]
    values: np.ndarray
    target_name: str
    test_mask: np.ndarray

    def __post_init__(self) -> None:
        names = tuple(str(n) for n in self.variable_names)
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")
        values = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if values.ndim != 2:
            raise SchemaError("values must be a 2-d matrix (rows x variables)")
        if values.shape[1] != len(names):
            raise SchemaError(
                f"{len(names)} variable names but {values.shape[1]} columns"
            )
        finite = np.isfinite(values)
        if not finite.all():
            bad = [names[k] for k in np.nonzero(~finite.all(axis=0))[0]]
            raise SchemaError(f"non-finite entries in column(s): {', '.join(bad)}")
        if self.target_name not in names:
            raise SchemaError(f"target {self.target_name!r} is not a variable")
        mask = np.asarray(self.test_mask, dtype=bool)
        if mask.shape != (values.shape[0],):
            raise SchemaError("test_mask length must equal the number of rows")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "test_mask", mask)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_test(self) -> int:
        return int(self.test_mask.sum())

    @property
    def n_train(self) -> int:
        return self.n - self.n_test

    def column_index(self, name: str) -> int:
        try:
            return self.variable_names.index(name)
        except ValueError:
            raise SchemaError(f"no column named {name!r}") from None

    def _row_selector(self, split: str | None) -> slice | np.ndarray:
        if split is None:
            return slice(None)
        if split == TRAIN:
            return ~self.test_mask
        if split == TEST:
            return self.test_mask
        raise ValueError(f"split must be {TRAIN!r}, {TEST!r} or None, got {split!r}")

    def matrix(self, names: Iterable[str], split: str | None = None) -> np.ndarray:
        """Copy of the requested columns, in the requested order."""
        idx = [self.column_index(n) for n in names]
        rows = self.values[self._row_selector(split)]
        if not idx:
            return np.empty((rows.shape[0], 0), dtype=float)
        return np.ascontiguousarray(rows[:, idx])

    def column(self, name: str, split: str | None = None) -> np.ndarray:
        return self.values[self._row_selector(split), self.column_index(name)]

    def target_values(self, split: str | None = None) -> np.ndarray:
        return self.column(self.target_name, split)


def holdout_mask_from_seed(n: int, test_fraction: float, seed: int) -> np.ndarray:
    """Deterministic random row split: True marks test rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1)
    rng = np.random.default_rng([int(seed), _SPLIT_STREAM])
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:n_test]] = True
    return mask


def load_csv(
    path,
    target: str,
    split_column: str | None = None,
    test_fraction: float = 0.10,
    seed: int = 0,
) -> Dataset:
    """Ingest a dataset from CSV.

    The header row names the variables. The split is read from
    ``split_column`` (values ``train``/``test``) when given, otherwise
    generated from ``seed`` and ``test_fraction``. Non-numeric or
    non-finite data cells are rejected.
    """
    with open(path, newline="") as fp:
        reader = csv.reader(fp)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        split_idx = None
        if split_column is not None:
            if split_column not in header:
                raise SchemaError(f"{path}: no split column named {split_column!r}")
            split_idx = header.index(split_column)
        names = [h for k, h in enumerate(header) if k != split_idx]
        data_idx = [k for k in range(len(header)) if k != split_idx]
        rows: list[list[float]] = []
        tags: list[bool] = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(record[k]) for k in data_idx])
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno}: non-numeric value in data column"
                ) from None
            if split_idx is not None:
                tag = record[split_idx].strip().lower()
                if tag not in (TRAIN, TEST):
                    raise SchemaError(
                        f"{path}:{lineno}: split must be {TRAIN!r} or {TEST!r}, "
                        f"got {tag!r}"
                    )
                tags.append(tag == TEST)
    values = np.asarray(rows, dtype=float)
    if values.size == 0:
        raise SchemaError(f"{path}: no data rows")
    if split_idx is not None:
        mask = np.asarray(tags, dtype=bool)
    else:
        mask = holdout_mask_from_seed(values.shape[0], test_fraction, seed)
    return Dataset(tuple(names), values, target, mask)


def save_csv(data: Dataset, path) -> None:
    """Write a dataset back to CSV, with the split as a final column."""
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(list(data.variable_names) + ["split"])
        tags = np.where(data.test_mask, TEST, TRAIN)
        for row, tag in zip(data.values, tags):
            writer.writerow([repr(float(v)) for v in row] + [str(tag)])


@dataclass(frozen=True)
class IndexPartition:
    """How one feature of interest partitions the variables around it.

    ``remaining`` is the other model features; it splits into
    ``conditioned`` (also in the conditioning set) and ``unconditioned``
    (the features whose ties to the replacement get severed).
    ``external`` holds conditioning variables that are not model features
    at all. The optional ``extension`` mirrors the same bookkeeping for a
    set added to the conditioning set.
    """

    feature: str
    features: tuple[str, ...]
    conditioning: tuple[str, ...]
    remaining: tuple[str, ...]
    conditioned: tuple[str, ...]
    unconditioned: tuple[str, ...]
    external: tuple[str, ...]
    extension: tuple[str, ...] | None = None
    extension_in_remaining: tuple[str, ...] | None = None
    extension_external: tuple[str, ...] | None = None
    unconditioned_without_extension: tuple[str, ...] | None = None


def _as_name_set(values: Iterable[str], what: str) -> frozenset[str]:
    names = frozenset(str(v) for v in values)
    if any(not n for n in names):
        raise InvalidPartitionError(f"{what} contains an empty name")
    return names


def make_partition(
    features: Iterable[str],
    feature: str,
    conditioning: Iterable[str] = (),
    target: str | None = None,
    extension: Iterable[str] | None = None,
) -> IndexPartition:
    """Build the index partition for one feature of interest.

    Deterministic in its set arguments: all derived sets come out sorted,
    so equal inputs (in any order) give equal partitions.
    """
    feature_set = _as_name_set(features, "features")
    cond_set = _as_name_set(conditioning, "conditioning")
    if feature not in feature_set:
        raise InvalidPartitionError(
            f"feature {feature!r} is not among the model features"
        )
    if feature in cond_set:
        raise InvalidPartitionError(
            f"feature {feature!r} may not appear in its own conditioning set"
        )
    if target is not None:
        if target in cond_set:
            raise InvalidPartitionError(
                f"target {target!r} may not appear in the conditioning set"
            )
        if target in feature_set:
            raise InvalidPartitionError(
                f"target {target!r} may not appear among the model features"
            )
    remaining = feature_set - {feature}
    part = {
        "feature": feature,
        "features": tuple(sorted(feature_set)),
        "conditioning": tuple(sorted(cond_set)),
        "remaining": tuple(sorted(remaining)),
        "conditioned": tuple(sorted(remaining & cond_set)),
        "unconditioned": tuple(sorted(remaining - cond_set)),
        "external": tuple(sorted(cond_set - remaining)),
    }
    if extension is not None:
        ext_set = _as_name_set(extension, "extension")
        if ext_set & cond_set:
            raise InvalidPartitionError(
                "extension overlaps the conditioning set: "
                + ", ".join(sorted(ext_set & cond_set))
            )
        if feature in ext_set:
            raise InvalidPartitionError(
                f"feature {feature!r} may not appear in the extension set"
            )
        if target is not None and target in ext_set:
            raise InvalidPartitionError(
                f"target {target!r} may not appear in the extension set"
            )
        unconditioned = remaining - cond_set
        part.update(
            extension=tuple(sorted(ext_set)),
            extension_in_remaining=tuple(sorted(remaining & ext_set)),
            extension_external=tuple(sorted(ext_set - remaining)),
            unconditioned_without_extension=tuple(sorted(unconditioned - ext_set)),
        )
    return IndexPartition(**part)


@runtime_checkable
class PredictiveModel(Protocol):
    """A fixed prediction function over a named, ordered feature set."""

    @property
    def feature_order(self) -> Sequence[str]: ...

    def predict(self, rows: np.ndarray) -> np.ndarray:
        """Predict for an (m, len(feature_order)) matrix; pure and deterministic."""
        ...


@runtime_checkable
class LossFunction(Protocol):
    """Pointwise nonnegative loss."""

    @property
    def name(self) -> str: ...

    def pointwise(self, y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray: ...


class SquaredError:
    """Squared error, the built-in loss."""

    name = "squared"

    def pointwise(self, y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
        y_true = np.asarray(y_true, dtype=float)
        y_pred = np.asarray(y_pred, dtype=float)
        return (y_true - y_pred) ** 2

    def __repr__(self) -> str:  # pragma: no cover
        return "SquaredError()"


_LOSSES = {"squared": SquaredError}


def get_loss(name: str) -> LossFunction:
    try:
        return _LOSSES[name]()
    except KeyError:
        raise ValueError(
            f"unknown loss {name!r}; available: {', '.join(sorted(_LOSSES))}"
        ) from None


def empirical_risk(
    model: PredictiveModel,
    data: Dataset,
    loss: LossFunction,
    split: str | None = TEST,
) -> float:
    """Average pointwise loss of the model over the given rows."""
    X = data.matrix(model.feature_order, split)
    if X.shape[0] == 0:
        raise ValueError("empirical risk needs at least one row")
    y = data.target_values(split)
    return float(np.mean(loss.pointwise(y, model.predict(X))))
