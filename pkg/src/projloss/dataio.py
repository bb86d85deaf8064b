"""Dataset parsers and writers, and binary model files.

On-disk labels are 1-based and become 0-based in memory.  Three text
formats are supported:

* multilabel, one sample per line: ``l1,l2,... i1:v1 i2:v2 ...`` with
  1-based feature indices (an empty label field is an empty set);
* ranking CSV: ``d`` feature columns followed by ``k`` columns holding a
  permutation of ``1..k`` (entry ``i`` is the position of item ``i``);
* ordinal CSV: feature columns followed by an integer level in ``1..k``.

The CSV formats accept an optional non-numeric header row, and a header
column named ``split`` (values ``train`` / ``test``) declares a test
partition.

Model files start with ``MAGIC``, a little-endian ``uint32`` header length
and a UTF-8 JSON header, followed by the arrays it lists as little-endian
float64 in C order.
"""

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (FormatError, IndexOutOfRange, InvalidDataset, NotAPermutation,
                     ParseError, VersionError)

MAGIC = b"PLOSSMDL"
FORMAT_VERSION = 1


@dataclass
class RawDataset:
    features: np.ndarray
    labels: list
    task: str
    n_labels: int
    declared_test: np.ndarray = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(len(self.labels), -1)
        if self.declared_test is not None:
            self.declared_test = np.asarray(self.declared_test, dtype=bool)

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return RawDataset(self.features[idx], [self.labels[i] for i in idx], self.task,
                          self.n_labels, None)

    def concat(self, other):
        return RawDataset(np.vstack([self.features, other.features]),
                          self.labels + other.labels, self.task, self.n_labels, None)


def _float(token, line, what="value"):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"invalid {what} {token!r}", line) from None


def _int(token, line, what="label"):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not an integer", line) from None


def parse_multilabel_sparse(path, n_labels=None, n_features=None):
    """Parse the sparse multilabel format; unknown sizes are inferred."""
    rows, labels = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            label_field = ""
            if ":" not in tokens[0]:  # otherwise the label field is empty
                label_field, tokens = tokens[0], tokens[1:]
            ys = set()
            for tok in filter(None, label_field.split(",")):
                y = _int(tok, lineno)
                if y < 1 or (n_labels is not None and y > n_labels):
                    raise IndexOutOfRange(f"label {y} out of range", lineno)
                ys.add(y - 1)
            feats = {}
            for tok in tokens:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"malformed feature {tok!r}", lineno)
                j = _int(idx, lineno, "feature index")
                if j < 1 or (n_features is not None and j > n_features):
                    raise IndexOutOfRange(f"feature index {j} out of range", lineno)
                feats[j - 1] = _float(val, lineno)
            labels.append(tuple(sorted(ys)))
            rows.append(feats)
    if n_features is None:
        n_features = 1 + max((max(r) for r in rows if r), default=-1)
    if n_labels is None:
        n_labels = 1 + max((max(y) for y in labels if y), default=-1)
    X = np.zeros((len(rows), n_features))
    for i, r in enumerate(rows):
        for j, v in r.items():
            X[i, j] = v
    return RawDataset(X, labels, "multilabel", n_labels)


def write_multilabel_sparse(path, dataset):
    with open(path, "w") as fh:
        for x, y in zip(dataset.features, dataset.labels):
            labels = ",".join(str(v + 1) for v in y)
            feats = " ".join(f"{j + 1}:{float(x[j])!r}" for j in np.flatnonzero(x))
            fh.write(f"{labels} {feats}".rstrip() + "\n")


def _read_csv(path):
    """Rows of strings plus the header (or ``None``) and the split column."""
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and any(c.strip() for c in r)]
    header = None
    if rows:
        try:
            [float(c) for c in rows[0][1] if c.strip().lower() not in ("train", "test")]
        except ValueError:
            header = [c.strip().lower() for c in rows[0][1]]
            rows = rows[1:]
    split_col = header.index("split") if header and "split" in header else None
    return rows, header, split_col


def _declared(rows, split_col):
    if split_col is None:
        return None
    flags = []
    for lineno, r in rows:
        value = r[split_col].strip().lower()
        if value not in ("train", "test"):
            raise ParseError(f"split must be 'train' or 'test', got {value!r}", lineno)
        flags.append(value == "test")
    return np.array(flags, dtype=bool)


def _strip_split(row, split_col):
    return [c for j, c in enumerate(row) if j != split_col]


def parse_ranking_csv(path, n_labels):
    """Parse the ranking CSV with ``n_labels`` trailing permutation columns."""
    rows, _, split_col = _read_csv(path)
    k = n_labels
    X, labels, width = [], [], None
    for lineno, r in rows:
        cells = _strip_split(r, split_col)
        if width is None:
            width = len(cells)
            if width <= k:
                raise ParseError(f"expected more than {k} columns, got {width}", lineno)
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, got {len(cells)}", lineno)
        X.append([_float(c, lineno, "feature") for c in cells[:-k]])
        perm = [_int(c, lineno, "rank") for c in cells[-k:]]
        if sorted(perm) != list(range(1, k + 1)):
            raise NotAPermutation(f"{perm} is not a permutation of 1..{k}", lineno)
        labels.append(tuple(p - 1 for p in perm))
    return RawDataset(np.array(X, dtype=float).reshape(len(labels), -1), labels,
                      "ranking", k, _declared(rows, split_col))


def parse_ordinal_csv(path, n_labels=None):
    """Parse the ordinal CSV; the last column is a level in ``1..n_labels``."""
    rows, _, split_col = _read_csv(path)
    X, labels, width = [], [], None
    for lineno, r in rows:
        cells = _strip_split(r, split_col)
        if width is None:
            width = len(cells)
            if width < 2:
                raise ParseError("expected features and a label column", lineno)
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, got {len(cells)}", lineno)
        y = _int(cells[-1].strip(), lineno)
        if y < 1 or (n_labels is not None and y > n_labels):
            raise IndexOutOfRange(f"level {y} out of range", lineno)
        X.append([_float(c, lineno, "feature") for c in cells[:-1]])
        labels.append(y - 1)
    k = n_labels or (1 + max(labels, default=0))
    return RawDataset(np.array(X, dtype=float).reshape(len(labels), -1), labels,
                      "ordinal", k, _declared(rows, split_col))


def _write_csv(path, dataset, label_cells):
    d = dataset.features.shape[1]
    header = [f"x{j + 1}" for j in range(d)] + label_cells(None)
    if dataset.declared_test is not None:
        header.append("split")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, (x, y) in enumerate(zip(dataset.features, dataset.labels)):
            row = [repr(float(v)) for v in x] + label_cells(y)
            if dataset.declared_test is not None:
                row.append("test" if dataset.declared_test[i] else "train")
            w.writerow(row)


def write_ranking_csv(path, dataset):
    k = dataset.n_labels
    _write_csv(path, dataset, lambda y: [f"r{i + 1}" for i in range(k)] if y is None
               else [str(p + 1) for p in y])


def write_ordinal_csv(path, dataset):
    _write_csv(path, dataset, lambda y: ["label"] if y is None else [str(y + 1)])


def load_dataset(path, task, n_labels=None):
    """Dispatch on task; ranking files need ``n_labels``."""
    if task == "multilabel":
        return parse_multilabel_sparse(path, n_labels)
    if task == "ranking":
        if n_labels is None:
            raise InvalidDataset("ranking datasets need the number of items")
        return parse_ranking_csv(path, n_labels)
    if task in ("ordinal", "multiclass"):
        ds = parse_ordinal_csv(path, n_labels)
        ds.task = task
        return ds
    raise InvalidDataset(f"unknown task {task!r}")


def save_model(path, header, arrays):
    """Write named float64 arrays with a JSON header.

    ``header`` is any JSON-serializable dict (task, sets, geometry, ...);
    the array shapes and the format version are added to it.
    """
    arrays = {name: np.ascontiguousarray(a, dtype="<f8") for name, a in arrays.items()}
    meta = dict(header)
    meta["format_version"] = FORMAT_VERSION
    meta["arrays"] = [[name, list(a.shape)] for name, a in arrays.items()]
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(a.tobytes())


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(header, arrays)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError("not a model file (bad magic bytes)")
    pos = len(MAGIC)
    if len(data) < pos + 4:
        raise FormatError("truncated model header")
    (size,) = struct.unpack_from("<I", data, pos)
    pos += 4
    try:
        meta = json.loads(data[pos:pos + size].decode())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError("truncated or corrupt model header") from None
    pos += size
    if meta.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"model format version {meta.get('format_version')} "
                           f"is not supported (expected {FORMAT_VERSION})")
    arrays = {}
    for name, shape in meta.pop("arrays"):
        count = int(np.prod(shape, dtype=int))
        end = pos + 8 * count
        if end > len(data):
            raise FormatError(f"model file truncated inside array {name!r}")
        arrays[name] = np.frombuffer(data[pos:end], dtype="<f8").reshape(shape).copy()
        pos = end
    if pos != len(data):
        raise FormatError("trailing bytes after the last array")
    meta.pop("format_version")
    return meta, arrays
