"""Survival cohorts: schema, CSV ingestion, and the numeric codec.

A cohort is held column-wise (`Cohort`) because every consumer downstream
works on arrays; `SurvivalRecord` is the row view for callers that want it.

The encoded representation has two blocks:

* ``z_cont``: standardized continuous covariates followed by one column of
  standardized ``log1p(time)``.
* ``z_disc``: one array per discrete channel (covariates first, the event
  indicator last) holding one-hot rows of width ``C_j + 1``; the final slot
  is the mask state used by the discrete diffusion.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
DISCRETE = "discrete"
EVENT_LABELS = ("0", "1")


class SchemaError(ValueError):
    """The schema or a CSV header is inconsistent."""


class DataError(ValueError):
    """A data row (or encoded batch) violates the schema."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    labels: tuple[str, ...] = ()

    @property
    def cardinality(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]
    time_column: str
    event_column: str
    delimiter: str = ","

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate covariate column names")
        for role in (self.time_column, self.event_column):
            if role in names:
                raise SchemaError(f"column {role!r} is both a covariate and a time/event column")
        if self.time_column == self.event_column:
            raise SchemaError("time and event column must differ")
        if not self.columns:
            raise SchemaError("schema needs at least one covariate")
        for c in self.columns:
            if c.kind == DISCRETE:
                if c.cardinality < 2:
                    raise SchemaError(f"discrete column {c.name!r} needs at least 2 categories")
                if len(set(c.labels)) != c.cardinality:
                    raise SchemaError(f"discrete column {c.name!r} has duplicate labels")
            elif c.kind != CONTINUOUS:
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")

    @property
    def continuous(self) -> list[Column]:
        return [c for c in self.columns if c.kind == CONTINUOUS]

    @property
    def discrete(self) -> list[Column]:
        return [c for c in self.columns if c.kind == DISCRETE]

    @property
    def d_cont(self) -> int:
        return len(self.continuous)

    @property
    def d_disc(self) -> int:
        return len(self.discrete)

    @property
    def cardinalities(self) -> list[int]:
        """Category counts of the discrete channels, event indicator last."""
        return [c.cardinality for c in self.discrete] + [2]

    def to_dict(self) -> dict:
        return {
            "columns": [
                {"name": c.name, "kind": c.kind, "labels": list(c.labels)} for c in self.columns
            ],
            "time_column": self.time_column,
            "event_column": self.event_column,
            "delimiter": self.delimiter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        cols = tuple(Column(c["name"], c["kind"], tuple(c["labels"])) for c in d["columns"])
        return cls(cols, d["time_column"], d["event_column"], d.get("delimiter", ","))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def header(self) -> list[str]:
        return [c.name for c in self.columns] + [self.time_column, self.event_column]


def load_schema(path: str | Path) -> FeatureSchema:
    """Read a schema file.

    The file is INI-style::

        [schema]
        time = time
        event = cens
        delimiter = ,

        [columns]
        age = continuous
        horTh = discrete: no, yes

    Column order in ``[columns]`` is the model's column order; the label order
    of a discrete column fixes its category indices.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"schema file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str  # keep column-name case
    parser.read(path)
    for section in ("schema", "columns"):
        if not parser.has_section(section):
            raise SchemaError(f"{path}: missing [{section}] section")
    meta = parser["schema"]
    for key in ("time", "event"):
        if key not in meta:
            raise SchemaError(f"{path}: [schema] needs a {key!r} entry")
    delimiter = meta.get("delimiter", ",")
    if delimiter in ("\\t", "tab"):
        delimiter = "\t"
    columns = []
    for name, spec in parser["columns"].items():
        kind, _, rest = spec.partition(":")
        kind = kind.strip()
        if kind == CONTINUOUS:
            columns.append(Column(name, CONTINUOUS))
        elif kind == DISCRETE:
            labels = tuple(s.strip() for s in rest.split(",") if s.strip())
            columns.append(Column(name, DISCRETE, labels))
        else:
            raise SchemaError(f"{path}: column {name!r} has unknown kind {kind!r}")
    return FeatureSchema(tuple(columns), meta["time"].strip(), meta["event"].strip(), delimiter)


def dump_schema(schema: FeatureSchema) -> str:
    lines = ["[schema]", f"time = {schema.time_column}", f"event = {schema.event_column}"]
    delim = "\\t" if schema.delimiter == "\t" else schema.delimiter
    lines += [f"delimiter = {delim}", "", "[columns]"]
    for c in schema.columns:
        if c.kind == CONTINUOUS:
            lines.append(f"{c.name} = continuous")
        else:
            lines.append(f"{c.name} = discrete: {', '.join(c.labels)}")
    return "\n".join(lines) + "\n"


def infer_schema(
    path: str | Path,
    time_column: str,
    event_column: str,
    max_categories: int = 10,
    delimiter: str = ",",
) -> FeatureSchema:
    """Guess a schema from a CSV: non-numeric or low-cardinality columns become discrete."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(_skip_comments(fh), delimiter=delimiter))
    if not rows:
        raise SchemaError(f"{path}: no data rows to infer a schema from")
    columns = []
    for name in rows[0]:
        if name in (time_column, event_column):
            continue
        values = [r[name].strip() for r in rows]
        distinct = sorted(set(values))
        try:
            numeric = sorted(distinct, key=float)
        except ValueError:
            columns.append(Column(name, DISCRETE, tuple(distinct)))
            continue
        if len(distinct) <= max_categories:
            columns.append(Column(name, DISCRETE, tuple(numeric)))
        else:
            columns.append(Column(name, CONTINUOUS))
    return FeatureSchema(tuple(columns), time_column, event_column, delimiter)


@dataclass(frozen=True)
class SurvivalRecord:
    x_cont: tuple[float, ...]
    x_disc: tuple[int, ...]
    event: int
    time: float


@dataclass
class Cohort:
    """Column-wise survival data.

    ``x_cont`` is (n, d_cont) raw values, ``x_disc`` is (n, d_disc) category
    indices, ``time`` is (n,) positive, ``event`` is (n,) in {0, 1}.
    """

    x_cont: np.ndarray
    x_disc: np.ndarray
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        self.x_cont = np.asarray(self.x_cont, dtype=float)
        self.x_disc = np.asarray(self.x_disc, dtype=np.int64)
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event, dtype=np.int64)
        n = len(self.time)
        if self.x_cont.ndim != 2 or self.x_disc.ndim != 2:
            raise DataError("x_cont and x_disc must be 2-D")
        if not (len(self.x_cont) == len(self.x_disc) == len(self.event) == n):
            raise DataError("cohort columns have different lengths")

    def __len__(self) -> int:
        return len(self.time)

    def subset(self, idx) -> "Cohort":
        return Cohort(self.x_cont[idx], self.x_disc[idx], self.time[idx], self.event[idx])

    def records(self) -> Iterator[SurvivalRecord]:
        for i in range(len(self)):
            yield SurvivalRecord(
                tuple(float(v) for v in self.x_cont[i]),
                tuple(int(v) for v in self.x_disc[i]),
                int(self.event[i]),
                float(self.time[i]),
            )

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord], schema: FeatureSchema) -> "Cohort":
        n = len(records)
        x_cont = np.array([r.x_cont for r in records], dtype=float).reshape(n, schema.d_cont)
        x_disc = np.array([r.x_disc for r in records], dtype=np.int64).reshape(n, schema.d_disc)
        return cls(x_cont, x_disc, [r.time for r in records], [r.event for r in records])

    @classmethod
    def empty(cls, schema: FeatureSchema) -> "Cohort":
        return cls(np.zeros((0, schema.d_cont)), np.zeros((0, schema.d_disc)), [], [])


def censoring_rate(cohort: Cohort) -> float | None:
    """Fraction of censored subjects, or None for an empty cohort."""
    if len(cohort) == 0:
        return None
    return float(1.0 - np.mean(cohort.event))


def _skip_comments(lines):
    for line in lines:
        if not line.startswith("#"):
            yield line


def _parse_event(raw: str) -> int:
    value = float(raw)
    if value not in (0.0, 1.0):
        raise ValueError(raw)
    return int(value)


def load_csv(path: str | Path, schema: FeatureSchema) -> Cohort:
    """Parse a survival CSV against ``schema``.

    Lines beginning with ``#`` are skipped, so files written by
    :func:`write_csv` (which carry provenance comments) load back unchanged.
    Columns not named by the schema are ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(_skip_comments(fh), delimiter=schema.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        missing = [name for name in schema.header() if name not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        extra = [h for h in header if h not in schema.header()]
        if extra:
            logger.info("%s: ignoring column(s) %s", path, ", ".join(extra))
        pos = {h: i for i, h in enumerate(header)}
        lookups = [{lab: k for k, lab in enumerate(c.labels)} for c in schema.discrete]

        x_cont, x_disc, times, events = [], [], [], []
        # line numbers are 1-based and count the header; comments are not counted
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            cont_vals = []
            for c in schema.continuous:
                raw = row[pos[c.name]].strip()
                try:
                    v = float(raw)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {c.name!r}: cannot parse {raw!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {c.name!r}: missing or non-finite value")
                cont_vals.append(v)
            disc_vals = []
            for c, lut in zip(schema.discrete, lookups):
                raw = row[pos[c.name]].strip()
                if raw not in lut:
                    raise DataError(f"{path}:{lineno}: column {c.name!r}: unknown category {raw!r}")
                disc_vals.append(lut[raw])
            raw_t = row[pos[schema.time_column]].strip()
            try:
                t = float(raw_t)
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable time {raw_t!r}") from None
            if not (math.isfinite(t) and t > 0):
                raise DataError(f"{path}:{lineno}: time must be positive and finite, got {raw_t!r}")
            raw_e = row[pos[schema.event_column]].strip()
            try:
                e = _parse_event(raw_e)
            except ValueError:
                raise DataError(f"{path}:{lineno}: event indicator must be 0 or 1, got {raw_e!r}") from None
            x_cont.append(cont_vals)
            x_disc.append(disc_vals)
            times.append(t)
            events.append(e)

    n = len(times)
    cohort = Cohort(
        np.array(x_cont, dtype=float).reshape(n, schema.d_cont),
        np.array(x_disc, dtype=np.int64).reshape(n, schema.d_disc),
        times,
        events,
    )
    rate = censoring_rate(cohort)
    if rate is None:
        logger.info("%s: 0 records (censoring rate undefined)", path)
    else:
        logger.info("%s: %d records, censoring rate %.4f", path, n, rate)
    return cohort


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(
    cohort: Cohort,
    schema: FeatureSchema,
    path: str | Path,
    comments: dict | None = None,
) -> None:
    """Write ``cohort`` in the schema's column order.

    Floats use ``repr`` so that a write/read cycle is lossless and output
    bytes depend only on the values.
    """
    with open(path, "w", newline="") as fh:
        for key, value in (comments or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        writer.writerow(schema.header())
        conts = {c.name: j for j, c in enumerate(schema.continuous)}
        discs = {c.name: j for j, c in enumerate(schema.discrete)}
        for i in range(len(cohort)):
            row = []
            for c in schema.columns:
                if c.kind == CONTINUOUS:
                    row.append(_fmt(cohort.x_cont[i, conts[c.name]]))
                else:
                    row.append(c.labels[cohort.x_disc[i, discs[c.name]]])
            row.append(_fmt(cohort.time[i]))
            row.append(str(int(cohort.event[i])))
            writer.writerow(row)


@dataclass
class CodecStats:
    cont_mean: np.ndarray
    cont_std: np.ndarray
    time_mean: float
    time_std: float
    labels: list[tuple[str, ...]]
    t_floor: float = 1e-6

    def to_dict(self) -> dict:
        return {
            "cont_mean": [float(v) for v in self.cont_mean],
            "cont_std": [float(v) for v in self.cont_std],
            "time_mean": float(self.time_mean),
            "time_std": float(self.time_std),
            "labels": [list(lab) for lab in self.labels],
            "t_floor": float(self.t_floor),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodecStats":
        return cls(
            np.asarray(d["cont_mean"], dtype=float),
            np.asarray(d["cont_std"], dtype=float),
            float(d["time_mean"]),
            float(d["time_std"]),
            [tuple(lab) for lab in d["labels"]],
            float(d["t_floor"]),
        )

    @property
    def cardinalities(self) -> list[int]:
        return [len(lab) for lab in self.labels] + [2]


def fit_codec(cohort: Cohort, schema: FeatureSchema, t_floor: float = 1e-6) -> CodecStats:
    """Fit z-score statistics (population std) on ``cohort``."""
    n = len(cohort)
    if n < 2:
        raise DataError(f"need at least 2 records to fit the codec, got {n}")
    if t_floor <= 0:
        raise ValueError("t_floor must be positive")
    mean = cohort.x_cont.mean(axis=0)
    std = cohort.x_cont.std(axis=0)
    for c, s in zip(schema.continuous, std):
        if not s > 0:
            raise DataError(f"continuous column {c.name!r} is constant")
    log_t = np.log1p(cohort.time)
    t_std = log_t.std()
    if not t_std > 0:
        raise DataError(f"time column {schema.time_column!r} is constant")
    return CodecStats(mean, std, float(log_t.mean()), float(t_std), [c.labels for c in schema.discrete], t_floor)


@dataclass
class EncodedBatch:
    z_cont: np.ndarray
    z_disc: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.z_cont)


def one_hot(idx: np.ndarray, cardinality: int) -> np.ndarray:
    """One-hot rows of width ``cardinality + 1`` (last slot = mask)."""
    out = np.zeros((len(idx), cardinality + 1))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def encode(cohort: Cohort, codec: CodecStats) -> EncodedBatch:
    if cohort.x_cont.shape[1] != len(codec.cont_mean) or cohort.x_disc.shape[1] != len(codec.labels):
        raise DataError("cohort does not match the codec's column layout")
    z_time = (np.log1p(cohort.time) - codec.time_mean) / codec.time_std
    z_cont = np.column_stack([(cohort.x_cont - codec.cont_mean) / codec.cont_std, z_time])
    z_disc = []
    for j, labels in enumerate(codec.labels):
        col = cohort.x_disc[:, j]
        if len(col) and (col.min() < 0 or col.max() >= len(labels)):
            raise DataError(f"discrete channel {j}: category index outside its label table")
        z_disc.append(one_hot(col, len(labels)))
    if len(cohort.event) and not np.isin(cohort.event, (0, 1)).all():
        raise DataError("event indicator must be 0 or 1")
    z_disc.append(one_hot(cohort.event, 2))
    return EncodedBatch(z_cont, z_disc)


def decode(batch: EncodedBatch, codec: CodecStats) -> tuple[Cohort, int]:
    """Invert :func:`encode`.

    Returns the cohort and the number of times clamped to ``codec.t_floor``.
    """
    d_cont = len(codec.cont_mean)
    x_cont = batch.z_cont[:, :d_cont] * codec.cont_std + codec.cont_mean
    time = np.expm1(batch.z_cont[:, d_cont] * codec.time_std + codec.time_mean)
    clamped = time < codec.t_floor
    time = np.where(clamped, codec.t_floor, time)
    idx = []
    for j, z in enumerate(batch.z_disc):
        if np.any(z[:, -1] != 0):
            raise DataError(f"discrete channel {j} still holds mask states")
        if not (np.all((z == 0) | (z == 1)) and np.all(z.sum(axis=1) == 1)):
            raise DataError(f"discrete channel {j} has a row that is not one-hot")
        idx.append(z.argmax(axis=1))
    n = len(batch)
    x_disc = np.column_stack(idx[:-1]) if len(idx) > 1 else np.zeros((n, 0), dtype=np.int64)
    return Cohort(x_cont, x_disc, time, idx[-1]), int(clamped.sum())


def split(cohort: Cohort, fraction: float, seed: int) -> tuple[Cohort, Cohort]:
    """Stratified (on the event indicator) random partition.

    ``fraction`` is the share of rows placed in the first part. Each part gets
    at least one event whenever the cohort has two or more.
    """
    n = len(cohort)
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n_first = int(round(n * fraction))
    if n < 2 or n_first in (0, n):
        raise ValueError(f"split of {n} records at fraction {fraction} leaves an empty part")
    rng = np.random.default_rng(seed)
    ev = np.flatnonzero(cohort.event == 1)
    ce = np.flatnonzero(cohort.event == 0)
    if len(ev) == 0:
        warnings.warn("no events: split cannot be stratified", stacklevel=2)
    ev = rng.permutation(ev)
    ce = rng.permutation(ce)
    k_ev = int(round(len(ev) * fraction))
    if len(ev) >= 2:
        k_ev = min(max(k_ev, 1), len(ev) - 1)
    k_ev = min(max(k_ev, n_first - len(ce)), n_first, len(ev))
    k_ce = n_first - k_ev
    first = np.sort(np.concatenate([ev[:k_ev], ce[:k_ce]]))
    second = np.sort(np.concatenate([ev[k_ev:], ce[k_ce:]]))
    return cohort.subset(first), cohort.subset(second)
