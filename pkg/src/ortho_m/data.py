"""Column-oriented sample store, fold plans and seeded random streams."""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataIntegrityError

__all__ = ["Dataset", "FoldPlan", "NuisanceFit", "make_folds", "stream", "read_csv", "write_csv"]

# scalar columns and block (matrix) columns understood by the CSV layer
SCALAR_COLUMNS = ("y", "tau", "d", "v")
BLOCK_COLUMNS = ("u", "x")


class Dataset:
    """Named numeric columns sharing a common row count.

    Scalar roles (``y``, ``tau``, ``d``, ``v``) are 1-d arrays, block roles
    (``u``, ``x``) are 2-d arrays with one row per observation.
    """

    def __init__(self, **columns):
        n = None
        cols = {}
        for name, arr in columns.items():
            if arr is None:
                continue
            arr = np.array(arr, dtype=float, order="C")  # fixed layout keeps BLAS sums reproducible
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataIntegrityError(
                    f"column {name!r} has {arr.shape[0]} rows, expected {n}"
                )
            arr.setflags(write=False)
            cols[name] = arr
        self._cols = cols
        self.n = 0 if n is None else n

    def __getitem__(self, name):
        try:
            return self._cols[name]
        except KeyError:
            raise DataIntegrityError(f"dataset has no column {name!r}") from None

    def __contains__(self, name):
        return name in self._cols

    def __len__(self):
        return self.n

    @property
    def columns(self):
        return tuple(self._cols)

    def subset(self, rows):
        rows = np.asarray(rows)
        return Dataset(**{k: v[rows] for k, v in self._cols.items()})

    def with_columns(self, **extra):
        cols = dict(self._cols)
        cols.update(extra)
        return Dataset(**cols)

    def equals(self, other):
        if set(self.columns) != set(other.columns):
            return False
        return all(np.array_equal(self[c], other[c]) for c in self.columns)


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self):
        if self.n_folds not in (2, 3):
            raise ConfigurationError(f"n_folds must be 2 or 3, got {self.n_folds}")

    def indices(self, fold):
        return np.flatnonzero(self.assignment == fold)

    def complement(self, fold):
        return np.flatnonzero(self.assignment != fold)

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.n_folds)


def make_folds(n, n_folds=2, seed=0):
    """Random balanced partition of ``range(n)``; fold sizes differ by at most 1."""
    if n < n_folds:
        raise ConfigurationError(f"cannot split {n} rows into {n_folds} folds")
    rng = stream(seed, 0, "folds")
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % n_folds
    assignment.setflags(write=False)
    return FoldPlan(n_folds, assignment, int(seed))


def stream(seed, replication, role):
    """Independent Philox generator for a ``(seed, replication, role)`` triple.

    The role string is mapped to an integer with CRC32 so stream identities are
    stable across runs and platforms.
    """
    role_id = zlib.crc32(role.encode("utf-8"))
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replication), role_id])
    return np.random.Generator(np.random.Philox(ss))


def _block_names(name, width):
    return [f"{name}_{j + 1}" for j in range(width)]


def write_csv(path, data):
    """Write a dataset with the ``y, tau, d, v, u_1.., x_1..`` header layout."""
    header, blocks = [], []
    for name in SCALAR_COLUMNS:
        if name in data:
            header.append(name)
            blocks.append(data[name][:, None])
    for name in BLOCK_COLUMNS:
        if name in data:
            block = data[name]
            header.extend(_block_names(name, block.shape[1]))
            blocks.append(block)
    table = np.hstack(blocks) if blocks else np.empty((0, 0))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataIntegrityError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataIntegrityError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}",
                    row=lineno - 2,
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataIntegrityError(f"{path}:{lineno}: non-numeric field", row=lineno - 2) from None
    table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    cols = {}
    for name in SCALAR_COLUMNS:
        if name in header:
            cols[name] = table[:, header.index(name)]
    for name in BLOCK_COLUMNS:
        idx = [i for i, h in enumerate(header) if h.startswith(name + "_")]
        if idx:
            expected = _block_names(name, len(idx))
            got = [header[i] for i in idx]
            if got != expected:
                raise DataIntegrityError(
                    f"{path}: block {name!r} columns must be {expected[0]}..{expected[-1]} in order"
                )
            cols[name] = table[:, idx]
    unknown = [h for h in header if h not in SCALAR_COLUMNS and h.split("_")[0] not in BLOCK_COLUMNS]
    if unknown:
        raise DataIntegrityError(f"{path}: unknown columns {unknown}")
    return Dataset(**cols)


class NuisanceFit:
    """Per-observation nuisance evaluations aligned with a dataset.

    ``columns`` maps a role name (``h``, ``q``, ``V``, ``p``, ``g``, ...) to a
    length-n array. ``source_fold[i]`` identifies the model that produced row
    ``i``'s values (``-1`` for injected truth); ``model_folds`` maps that id to
    the folds the model was trained on (default: the id itself is the single
    training fold). ``row_fold[i]`` is the fold row ``i`` belongs to.
    """

    def __init__(self, columns, source_fold=None, row_fold=None, params=None, roles=None,
                 model_folds=None):
        cols = {k: np.array(v, dtype=float) for k, v in columns.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise DataIntegrityError(f"nuisance columns have differing lengths {sorted(lengths)}")
        self.n = lengths.pop() if lengths else 0
        for v in cols.values():
            v.setflags(write=False)
        self.columns = cols
        self.source_fold = (np.full(self.n, -1, dtype=np.int64) if source_fold is None
                            else np.asarray(source_fold, dtype=np.int64))
        self.row_fold = (np.full(self.n, -2, dtype=np.int64) if row_fold is None
                         else np.asarray(row_fold, dtype=np.int64))
        self.params = dict(params or {})
        self.roles = dict(roles or {k: k for k in cols})
        self.model_folds = dict(model_folds or {})

    def __getitem__(self, role):
        try:
            return self.columns[role]
        except KeyError:
            raise DataIntegrityError(f"nuisance fit has no role {role!r}") from None

    def __contains__(self, role):
        return role in self.columns

    @classmethod
    def injected(cls, columns):
        """Wrap known (oracle) nuisance values; no fold bookkeeping applies."""
        return cls(columns)

    def subset(self, rows):
        rows = np.asarray(rows)
        return NuisanceFit({k: v[rows] for k, v in self.columns.items()},
                           self.source_fold[rows], self.row_fold[rows], self.params, self.roles,
                           self.model_folds)

    def replace(self, **columns):
        cols = dict(self.columns)
        cols.update(columns)
        return NuisanceFit(cols, self.source_fold, self.row_fold, self.params, self.roles,
                           self.model_folds)

    def training_folds(self, model_id):
        return tuple(self.model_folds.get(int(model_id), (int(model_id),)))

    def check_exclusion(self):
        """True when no row's values came from a model trained on its own fold."""
        for s in np.unique(self.source_fold):
            if s < 0:
                continue
            rows = self.source_fold == s
            if np.isin(self.row_fold[rows], self.training_folds(s)).any():
                return False
        return True

    def equals(self, other):
        return (set(self.columns) == set(other.columns)
                and all(np.array_equal(self[c], other[c]) for c in self.columns)
                and np.array_equal(self.source_fold, other.source_fold))
