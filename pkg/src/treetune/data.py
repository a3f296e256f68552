"""Datasets, file ingestion, stratified folds and classification metrics."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import tempfile
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"

DEFAULT_OPENML_URL = "https://api.openml.org"
CACHE_ENV = "TREETUNE_CACHE"


class DataError(ValueError):
    """A dataset could not be read, fetched or split."""


@dataclass(frozen=True)
class FeatureColumn:
    """One input attribute.

    ``values`` holds floats; for categorical columns each value is a category
    index into ``categories``. Missing cells are NaN.
    """

    name: str
    kind: str
    values: np.ndarray
    categories: tuple[str, ...] = ()

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


@dataclass(frozen=True)
class Schema:
    """What a learner needs to know about the columns of a training matrix."""

    categorical: np.ndarray  # bool per feature
    n_categories: np.ndarray  # 0 for numeric features
    n_classes: int

    @property
    def n_features(self) -> int:
        return len(self.categorical)

    @property
    def all_numeric(self) -> bool:
        return not bool(self.categorical.any())


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled instances stored column-major in a float matrix.

    Categorical cells are category indices, missing cells are NaN. Instances
    are immutable once constructed.
    """

    name: str
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    kinds: tuple[str, ...]
    categories: tuple[tuple[str, ...], ...]
    class_names: tuple[str, ...]
    external_id: int | None = None
    label_name: str = "class"
    _schema: Schema = field(init=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("feature matrix must be two-dimensional")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "y", _readonly(y))
        n, d = X.shape
        if len(y) != n:
            raise DataError(f"{n} feature rows but {len(y)} labels")
        if not (len(self.feature_names) == len(self.kinds) == len(self.categories) == d):
            raise DataError("feature metadata does not match the matrix width")
        cat = np.array([k == CATEGORICAL for k in self.kinds], dtype=bool)
        ncat = np.array([len(c) if k == CATEGORICAL else 0
                         for k, c in zip(self.kinds, self.categories)], dtype=np.int64)
        object.__setattr__(self, "_schema", Schema(_readonly(cat), _readonly(ncat), len(self.class_names)))

    # -- construction -----------------------------------------------------
    @classmethod
    def from_columns(cls, name: str, features: Sequence[FeatureColumn], labels: Sequence[int],
                     class_names: Sequence[str], external_id: int | None = None,
                     label_name: str = "class") -> "Dataset":
        labels = np.asarray(labels, dtype=np.int64)
        if len(features):
            X = np.column_stack([np.asarray(f.values, dtype=float) for f in features])
        else:
            X = np.empty((len(labels), 0))
        ds = cls(name, X, labels, tuple(f.name for f in features), tuple(f.kind for f in features),
                 tuple(tuple(f.categories) for f in features), tuple(class_names),
                 external_id, label_name)
        ds.check()
        return ds

    @classmethod
    def from_arrays(cls, name: str, X, y, class_names: Sequence[str] | None = None,
                    feature_names: Sequence[str] | None = None) -> "Dataset":
        """All-numeric dataset from a matrix and integer labels ``0..C-1``."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        d = X.shape[1]
        if class_names is None:
            class_names = [str(c) for c in range(int(y.max()) + 1)]
        names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(d))
        ds = cls(name, X, y, names, (NUMERIC,) * d, ((),) * d, tuple(class_names))
        ds.check()
        return ds

    def check(self) -> None:
        """Raise :class:`DataError` unless all dataset invariants hold."""
        n = self.n_instances
        if n < 1:
            raise DataError("empty dataset")
        if self.y.min() < 0 or self.y.max() >= self.n_classes:
            raise DataError("class index out of range")
        counts = self.class_counts
        if (counts == 0).any():
            empty = [self.class_names[i] for i in np.flatnonzero(counts == 0)]
            raise DataError(f"classes without instances: {empty}")
        for j, kind in enumerate(self.kinds):
            col = self.X[:, j]
            present = col[~np.isnan(col)]
            if kind == CATEGORICAL:
                if present.size and (present.min() < 0 or present.max() >= len(self.categories[j])
                                     or (present != np.round(present)).any()):
                    raise DataError(f"column {self.feature_names[j]!r} has invalid category indices")
            elif not np.isfinite(present).all():
                raise DataError(f"column {self.feature_names[j]!r} has non-finite values")

    def take(self, indices, name: str | None = None) -> "Dataset":
        """Row subset. Subsets may lack some classes; they keep the parent's class list."""
        idx = np.asarray(indices)
        return Dataset(name or self.name, self.X[idx], self.y[idx], self.feature_names, self.kinds,
                       self.categories, self.class_names, self.external_id, self.label_name)

    # -- views --------------------------------------------------------------
    @property
    def schema(self) -> Schema:
        return self._schema

    @property
    def features(self) -> list[FeatureColumn]:
        return [FeatureColumn(n, k, self.X[:, j], c)
                for j, (n, k, c) in enumerate(zip(self.feature_names, self.kinds, self.categories))]

    @property
    def labels(self) -> np.ndarray:
        return self.y

    @property
    def n_instances(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.X).any())

    def stratifiable(self, k: int) -> bool:
        return bool(self.class_counts.min() >= k)

    @property
    def stratifiable_10(self) -> bool:
        return self.stratifiable(10)

    def cell(self, i: int, j: int):
        """Decoded cell value: float, category name, or None when missing."""
        v = self.X[i, j]
        if np.isnan(v):
            return None
        if self.kinds[j] == CATEGORICAL:
            return self.categories[j][int(v)]
        return float(v)

    def __repr__(self) -> str:
        return (f"Dataset({self.name!r}, N={self.n_instances}, D={self.n_features}, "
                f"C={self.n_classes})")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def load_csv(path, label_column: str | int = -1, missing_token: str = "?", delimiter: str = ",",
             categorical: Sequence[str] = (), name: str | None = None) -> Dataset:
    """Read a headed CSV file.

    Columns whose non-missing cells all parse as numbers are numeric, the rest
    categorical (levels in first-appearance order), unless listed in
    ``categorical``. Class names are collected in first-appearance order.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: empty dataset")
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} missing")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not -len(header) <= label_idx < len(header):
            raise DataError(f"{path}: label column {label_idx} missing")
        label_idx %= len(header)
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")

    def is_missing(cell: str) -> bool:
        return cell == missing_token or cell == ""

    features = []
    for j, col_name in enumerate(header):
        if j == label_idx:
            continue
        cells = [row[j].strip() for row in body]
        parsed = [None if is_missing(c) else _parse_float(c) for c in cells]
        numeric = col_name not in categorical and all(
            p is not None for c, p in zip(cells, parsed) if not is_missing(c))
        if numeric:
            values = np.full(len(cells), np.nan)
            for r, (c, p) in enumerate(zip(cells, parsed)):
                if is_missing(c):
                    continue
                if not math.isfinite(p):
                    raise DataError(f"{path}: row {r + 2}, column {col_name!r}: non-finite value {c!r}")
                values[r] = p
            features.append(FeatureColumn(col_name, NUMERIC, values))
        else:
            levels: dict[str, int] = {}
            values = np.full(len(cells), np.nan)
            for r, c in enumerate(cells):
                if not is_missing(c):
                    values[r] = levels.setdefault(c, len(levels))
            features.append(FeatureColumn(col_name, CATEGORICAL, values, tuple(levels)))

    classes: dict[str, int] = {}
    labels = []
    for r, row in enumerate(body, start=2):
        cell = row[label_idx].strip()
        if is_missing(cell):
            raise DataError(f"{path}: row {r}: missing class label")
        labels.append(classes.setdefault(cell, len(classes)))
    return Dataset.from_columns(name or path.stem, features, labels, tuple(classes),
                                label_name=header[label_idx])


def save_csv(dataset: Dataset, path, missing_token: str = "?", delimiter: str = ",") -> None:
    """Write ``dataset`` so that :func:`load_csv` reads the same cells back."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(list(dataset.feature_names) + [dataset.label_name])
        for i in range(dataset.n_instances):
            row = []
            for j in range(dataset.n_features):
                v = dataset.cell(i, j)
                row.append(missing_token if v is None else (repr(v) if isinstance(v, float) else v))
            row.append(dataset.class_names[dataset.y[i]])
            w.writerow(row)


# ---------------------------------------------------------------------------
# ARFF
# ---------------------------------------------------------------------------

def _arff_tokens(text: str, lineno: int) -> list[tuple[str, bool]]:
    """Split a comma-separated ARFF line into (token, was_quoted) pairs."""
    out = []
    i, n = 0, len(text)
    while i <= n:
        while i < n and text[i] in " \t":
            i += 1
        if i < n and text[i] in "'\"":
            q = text[i]
            i += 1
            buf = []
            while i < n and text[i] != q:
                if text[i] == "\\" and i + 1 < n:
                    i += 1
                buf.append(text[i])
                i += 1
            if i >= n:
                raise DataError(f"line {lineno}: unterminated quote")
            i += 1
            token, quoted = "".join(buf), True
            while i < n and text[i] in " \t":
                i += 1
        else:
            j = text.find(",", i)
            j = n if j < 0 else j
            token, quoted = text[i:j].strip(), False
            i = j
        out.append((token, quoted))
        if i < n and text[i] != ",":
            raise DataError(f"line {lineno}: malformed value list")
        i += 1
    return out


_ATTR_RE = re.compile(r"@attribute\s+('(?:[^'\\]|\\.)*'|\"(?:[^\"\\]|\\.)*\"|\S+)\s+(.+)$", re.I)


def load_arff(path, label: str | None = None, name: str | None = None) -> Dataset:
    """Read a dense ARFF file.

    Nominal attributes become categorical columns with their declared levels;
    numeric/real/integer become numeric. The label is ``label`` or, by
    default, the last nominal attribute.
    """
    path = Path(path)
    relation = None
    attrs: list[tuple[str, tuple[str, ...] | None]] = []
    rows: list[tuple[int, list[tuple[str, bool]]]] = []
    in_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if in_data:
                if line.startswith("{"):
                    raise DataError(f"{path}: line {lineno}: sparse ARFF unsupported")
                rows.append((lineno, _arff_tokens(line, lineno)))
                continue
            low = line.lower()
            if low.startswith("@relation"):
                relation = line[len("@relation"):].strip().strip("'\"")
            elif low.startswith("@attribute"):
                m = _ATTR_RE.match(line)
                if not m:
                    raise DataError(f"{path}: line {lineno}: malformed attribute declaration")
                attr_name = m.group(1)
                if attr_name[0] in "'\"":
                    attr_name = attr_name[1:-1]
                spec = m.group(2).strip()
                if spec.startswith("{"):
                    if not spec.endswith("}"):
                        raise DataError(f"{path}: line {lineno}: unterminated nominal specification")
                    levels = tuple(t for t, _ in _arff_tokens(spec[1:-1], lineno))
                    attrs.append((attr_name, levels))
                elif spec.lower() in ("numeric", "real", "integer"):
                    attrs.append((attr_name, None))
                else:
                    raise DataError(f"{path}: line {lineno}: unsupported attribute type {spec!r}")
            elif low.startswith("@data"):
                in_data = True
            else:
                raise DataError(f"{path}: line {lineno}: unexpected header line")
    if not attrs:
        raise DataError(f"{path}: malformed header (no attributes)")
    if not in_data:
        raise DataError(f"{path}: malformed header (no @data section)")
    if not rows:
        raise DataError(f"{path}: empty dataset")

    names = [a for a, _ in attrs]
    if label is None:
        nominal = [i for i, (_, lv) in enumerate(attrs) if lv is not None]
        if not nominal:
            raise DataError(f"{path}: no nominal attribute to use as the class")
        label_idx = nominal[-1]
    else:
        if label not in names:
            raise DataError(f"{path}: label attribute {label!r} missing")
        label_idx = names.index(label)
    if attrs[label_idx][1] is None:
        raise DataError(f"{path}: label attribute {names[label_idx]!r} is not nominal")

    n, d = len(rows), len(attrs)
    table = np.full((n, d), np.nan)
    for r, (lineno, tokens) in enumerate(rows):
        if len(tokens) != d:
            raise DataError(f"{path}: line {lineno}: {len(tokens)} values, expected {d}")
        for j, ((tok, quoted), (attr_name, levels)) in enumerate(zip(tokens, attrs)):
            if tok == "?" and not quoted:
                continue
            if levels is None:
                v = _parse_float(tok)
                if v is None or not math.isfinite(v):
                    raise DataError(f"{path}: line {lineno}: bad numeric value {tok!r} for {attr_name!r}")
                table[r, j] = v
            else:
                try:
                    table[r, j] = levels.index(tok)
                except ValueError:
                    raise DataError(f"{path}: line {lineno}: {tok!r} is not a level of {attr_name!r}") from None

    y_raw = table[:, label_idx]
    if np.isnan(y_raw).any():
        bad = rows[int(np.flatnonzero(np.isnan(y_raw))[0])][0]
        raise DataError(f"{path}: line {bad}: missing class label")
    declared = attrs[label_idx][1]
    used = np.unique(y_raw.astype(np.int64))
    remap = np.full(len(declared), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    labels = remap[y_raw.astype(np.int64)]
    class_names = tuple(declared[i] for i in used)

    features = []
    for j, (attr_name, levels) in enumerate(attrs):
        if j == label_idx:
            continue
        if levels is None:
            features.append(FeatureColumn(attr_name, NUMERIC, table[:, j]))
        else:
            features.append(FeatureColumn(attr_name, CATEGORICAL, table[:, j], levels))
    return Dataset.from_columns(name or relation or path.stem, features, labels, class_names,
                                label_name=names[label_idx])


# ---------------------------------------------------------------------------
# OpenML
# ---------------------------------------------------------------------------

def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "treetune" / "openml"


def _http_get(url: str, timeout: float) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code in (404, 412):
            raise DataError(f"id not found ({url}: HTTP {exc.code})") from exc
        raise DataError(f"HTTP failure {exc.code} for {url}") from exc
    except urllib.error.URLError as exc:
        raise DataError(f"HTTP failure for {url}: {exc.reason}") from exc


def _atomic_write(path: Path, payload: bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".part")
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise DataError(f"cache write failure for {path}: {exc}") from exc


def fetch_openml(dataset_id: int, cache_dir=None, base_url: str = DEFAULT_OPENML_URL,
                 timeout: float = 60.0) -> Dataset:
    """Download (or read from cache) the ARFF file of an OpenML dataset.

    The cache holds ``<id>.arff`` plus ``<id>.json`` with the dataset
    description, whose default target attribute selects the label.
    """
    if not isinstance(dataset_id, (int, np.integer)) or dataset_id < 1:
        raise DataError(f"id not found: {dataset_id}")
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    arff_path = cache / f"{dataset_id}.arff"
    meta_path = cache / f"{dataset_id}.json"
    if not arff_path.exists():
        base = base_url.rstrip("/")
        raw = _http_get(f"{base}/api/v1/json/data/{dataset_id}", timeout)
        try:
            desc = json.loads(raw)["data_set_description"]
            file_id = int(desc["file_id"])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"id not found: {dataset_id} (unexpected description)") from exc
        payload = _http_get(f"{base}/data/v1/download/{file_id}", timeout)
        _atomic_write(meta_path, json.dumps(desc, sort_keys=True).encode())
        _atomic_write(arff_path, payload)
    target = None
    if meta_path.exists():
        target = json.loads(meta_path.read_text()).get("default_target_attribute") or None
        if target and "," in target:
            target = None
    ds = load_arff(arff_path, label=target)
    return Dataset(ds.name, ds.X, ds.y, ds.feature_names, ds.kinds, ds.categories, ds.class_names,
                   int(dataset_id), ds.label_name)


def balance_scale() -> Dataset:
    """The 625-row balance-scale table, generated from its defining rule.

    Rows enumerate left weight, left distance, right weight and right
    distance over 1..5; the class says which way the scale tips.
    """
    grid = np.array(np.meshgrid(*[np.arange(1, 6)] * 4, indexing="ij")).reshape(4, -1).T
    torque = grid[:, 0] * grid[:, 1] - grid[:, 2] * grid[:, 3]
    y = np.where(torque > 0, 0, np.where(torque == 0, 1, 2))
    return Dataset.from_arrays("balance-scale", grid, y, ("L", "B", "R"),
                               ("left-weight", "left-distance", "right-weight", "right-distance"))


_MONKS_RULES = {
    1: lambda a: (a[:, 0] == a[:, 1]) | (a[:, 4] == 1),
    2: lambda a: (a == 1).sum(axis=1) == 2,
    3: lambda a: ((a[:, 4] == 3) & (a[:, 3] == 1)) | ((a[:, 4] != 4) & (a[:, 1] != 3)),
}


def monks(problem: int) -> Dataset:
    """Noise-free enumeration of all 432 attribute combinations of a MONK's problem.

    Attribute values keep their integer codes and are treated as ordinal
    numbers so the compiled tree growers apply.
    """
    if problem not in _MONKS_RULES:
        raise DataError(f"unknown MONK's problem {problem}")
    sizes = (3, 3, 2, 3, 4, 2)
    grid = np.array(np.meshgrid(*[np.arange(1, s + 1) for s in sizes], indexing="ij")).reshape(6, -1).T
    y = _MONKS_RULES[problem](grid).astype(np.int64)
    return Dataset.from_arrays(f"monks-{problem}", grid, y, ("0", "1"),
                               tuple(f"attr{j + 1}" for j in range(6)))


BUILTIN = {"balance-scale": balance_scale, "monks-1": lambda: monks(1), "monks-2": lambda: monks(2),
           "monks-3": lambda: monks(3)}


def load_source(ref: str, cache_dir=None) -> Dataset:
    """Resolve ``openml:<id>``, ``builtin:<name>`` or a ``.csv`` / ``.arff`` path."""
    ref = str(ref)
    if ref.startswith("openml:"):
        try:
            did = int(ref.split(":", 1)[1])
        except ValueError:
            raise DataError(f"id not found: {ref}") from None
        return fetch_openml(did, cache_dir)
    if ref.startswith("builtin:"):
        key = ref.split(":", 1)[1]
        if key not in BUILTIN:
            raise DataError(f"unknown builtin dataset {key!r}")
        return BUILTIN[key]()
    path = Path(ref)
    if not path.exists():
        raise DataError(f"no such file: {ref}")
    if path.suffix.lower() == ".arff":
        return load_arff(path)
    return load_csv(path)


# ---------------------------------------------------------------------------
# Folds and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of every instance to one of ``k`` folds."""

    k: int
    assignment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "assignment", _readonly(np.asarray(self.assignment, dtype=np.int64)))

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for f in range(self.k):
            yield self.train_indices(f), self.test_indices(f)

    def __eq__(self, other) -> bool:
        return (isinstance(other, FoldPlan) and self.k == other.k
                and np.array_equal(self.assignment, other.assignment))


def stratified_folds(dataset: Dataset | Sequence[int], k: int, seed: int, strict: bool = True) -> FoldPlan:
    """Stratified ``k``-fold assignment, deterministic in ``seed``.

    Each class is shuffled and dealt round-robin, continuing where the
    previous class stopped, so per-fold class counts differ from the
    proportional share by less than one.
    """
    y = dataset.y if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=np.int64)
    if k < 2:
        raise DataError("k must be at least 2")
    if len(y) < k:
        raise DataError(f"{len(y)} instances cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if strict and len(idx) < k:
            raise DataError(f"class {c} has {len(idx)} instances, fewer than k={k}")
        perm = rng.permutation(idx)
        assignment[perm] = (offset + np.arange(len(perm))) % k
        offset = (offset + len(perm)) % k
    return FoldPlan(k, assignment)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    return np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes).reshape(
        n_classes, n_classes)


def balanced_accuracy(cm) -> float:
    """Mean per-class recall; classes absent from the test split are skipped."""
    cm = np.asarray(cm)
    rows = cm.sum(axis=1)
    present = rows > 0
    if not present.any():
        raise DataError("confusion matrix has no instances")
    return float(np.mean(np.diag(cm)[present] / rows[present]))


def tree_size(model) -> int:
    """Total node count (internal nodes plus leaves) of a fitted tree."""
    return int(model.n_nodes)
