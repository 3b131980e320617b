"""Domain types, burn-ratio arithmetic, severity classes and columnar I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    DuplicateId,
    NonFinite,
    ParseError,
    SchemaMismatch,
)

RESERVED_COLUMNS = ("id", "x", "y")
DEFAULT_RESPONSE = "dnbr"


class SeverityCategory(IntEnum):
    HighEnhancedGrowth = 0
    LowEnhancedRegrowth = 1
    Unburned = 2
    Low = 3
    ModerateLow = 4
    ModerateHigh = 5
    High = 6


# Lower edges of categories 1..6. Midpoints between integer class limits.
CATEGORY_EDGES = np.array([-250.5, -100.5, 99.5, 269.5, 439.5, 659.5])


def nbr(nir, swir):
    """Normalized burn ratio ``(nir - swir) / (nir + swir)``.

    Works elementwise on arrays. Raises DegenerateInput where the
    denominator vanishes.
    """
    nir = np.asarray(nir, dtype=float)
    swir = np.asarray(swir, dtype=float)
    if not (np.all(np.isfinite(nir)) and np.all(np.isfinite(swir))):
        raise NonFinite("reflectances must be finite")
    denom = nir + swir
    if np.any(denom == 0):
        raise DegenerateInput("nir + swir == 0")
    out = (nir - swir) / denom
    return float(out) if out.ndim == 0 else out


def dnbr(nbr_pre, nbr_post):
    """Differenced NBR on the x1000 scale."""
    a = np.asarray(nbr_pre, dtype=float)
    b = np.asarray(nbr_post, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFinite("NBR values must be finite")
    out = 1000.0 * (a - b)
    return float(out) if out.ndim == 0 else out


def categorize(value) -> SeverityCategory:
    v = float(value)
    if not math.isfinite(v):
        raise NonFinite(f"cannot categorize {value!r}")
    return SeverityCategory(int(np.searchsorted(CATEGORY_EDGES, v, side="right")))


def categorize_array(values) -> np.ndarray:
    """Vectorised :func:`categorize`; returns integer category codes."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFinite("cannot categorize non-finite predictions")
    return np.searchsorted(CATEGORY_EDGES, v, side="right").astype(np.int64)


@dataclass(frozen=True)
class Site:
    id: int
    x: float
    y: float


def distance(a: Site, b: Site) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True, eq=False)
class PixelDataset:
    """n pixels with planar coordinates, p named covariates and a response.

    Missing covariates are stored as NaN in ``X`` and flagged in ``mask``
    (True = missing). The response may be NaN for unlabelled rows.
    """

    ids: np.ndarray
    coords: np.ndarray
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    mask: np.ndarray = None
    distance_unit: str = "unit"
    response_name: str = DEFAULT_RESPONSE

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        columns = tuple(self.columns)
        n = ids.shape[0]
        if n < 1:
            raise SchemaMismatch("dataset must contain at least one row")
        if X.shape[1] < 1:
            raise SchemaMismatch("dataset must contain at least one covariate")
        if coords.shape[0] != n or X.shape[0] != n or y.shape[0] != n:
            raise SchemaMismatch("ids, coords, X and y disagree on row count")
        if len(columns) != X.shape[1]:
            raise SchemaMismatch("column names do not match covariate count")
        if len(set(columns)) != len(columns):
            raise SchemaMismatch(f"duplicate column names in {columns}")
        if len(np.unique(ids)) != n:
            raise DuplicateId("site ids must be unique")
        if not np.all(np.isfinite(coords)):
            raise NonFinite("coordinates must be finite")
        mask = np.isnan(X) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != X.shape:
            raise SchemaMismatch("mask shape does not match X")
        if not np.all(np.isfinite(X[~mask])):
            raise NonFinite("observed covariates must be finite")
        if np.any(np.isinf(y)):
            raise NonFinite("response must be finite where observed")
        X = X.copy()
        X[mask] = np.nan
        for arr in (ids, coords, X, y, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def sites(self) -> list[Site]:
        return [Site(int(i), float(a), float(b)) for i, (a, b) in zip(self.ids, self.coords)]

    @property
    def complete(self) -> bool:
        return not self.mask.any()

    def replace(self, **changes) -> "PixelDataset":
        fields = dict(
            ids=self.ids, coords=self.coords, X=self.X, y=self.y,
            columns=self.columns, mask=None, distance_unit=self.distance_unit,
            response_name=self.response_name,
        )
        fields.update(changes)
        return PixelDataset(**fields)

    def subset(self, rows) -> "PixelDataset":
        rows = np.asarray(rows)
        return self.replace(ids=self.ids[rows], coords=self.coords[rows],
                            X=self.X[rows], y=self.y[rows])

    def select_columns(self, names: Sequence[str]) -> "PixelDataset":
        idx = [self.columns.index(c) for c in names]
        return self.replace(X=self.X[:, idx], columns=tuple(names))


def concat_datasets(datasets: Sequence[PixelDataset]) -> PixelDataset:
    """Row-concatenate datasets sharing the same covariate columns.

    Ids are renumbered consecutively since ids are only unique per file.
    """
    first = datasets[0]
    for d in datasets[1:]:
        if d.columns != first.columns:
            raise SchemaMismatch("datasets have different covariate columns")
    n = sum(d.n for d in datasets)
    return PixelDataset(
        ids=np.arange(n),
        coords=np.vstack([d.coords for d in datasets]),
        X=np.vstack([d.X for d in datasets]),
        y=np.concatenate([d.y for d in datasets]),
        columns=first.columns,
        distance_unit=first.distance_unit,
        response_name=first.response_name,
    )


# --------------------------------------------------------------------------
# columnar text format

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def metadata_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def read_metadata(path) -> dict[str, str]:
    meta = {}
    mp = metadata_path(path)
    if not mp.exists():
        return meta
    for lineno, line in enumerate(mp.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected key=value", row=lineno)
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def write_metadata(path, meta: Mapping[str, str]) -> None:
    text = "".join(f"{k}={v}\n" for k, v in sorted(meta.items()))
    metadata_path(path).write_text(text, encoding="utf-8")


def _parse_float(text, row, column):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=column) from None


def load_dataset(path, response_name: str | None = None,
                 covariates: Sequence[str] | None = None) -> PixelDataset:
    """Read a dataset from the comma-separated format.

    Layout is ``id,x,y,<response>,<covariates...>``; missing values are empty
    fields. ``covariates`` optionally restricts and orders the covariate
    columns (an expected-schema check).
    """
    meta = read_metadata(path)
    response = response_name or meta.get("response_name", DEFAULT_RESPONSE)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        required = list(RESERVED_COLUMNS) + [response]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaMismatch(f"{path}: missing required columns {missing}")
        if len(set(header)) != len(header):
            raise SchemaMismatch(f"{path}: duplicate column names")
        cov_names = [h for h in header if h not in required]
        if covariates is not None:
            absent = [c for c in covariates if c not in cov_names]
            if absent:
                raise SchemaMismatch(f"{path}: missing covariate columns {absent}")
            cov_names = list(covariates)
        if not cov_names:
            raise SchemaMismatch(f"{path}: no covariate columns")
        pos = {h: i for i, h in enumerate(header)}
        ids, coords, ys, rows = [], [], [], []
        seen = set()
        for r, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", row=r)
            try:
                rid = int(rec[pos["id"]])
            except ValueError:
                raise ParseError("id is not an integer", row=r, column="id") from None
            if rid in seen:
                raise DuplicateId(f"{path}: duplicate id {rid} at row {r}")
            seen.add(rid)
            cx = _parse_float(rec[pos["x"]], r, "x")
            cy = _parse_float(rec[pos["y"]], r, "y")
            if not (math.isfinite(cx) and math.isfinite(cy)):
                raise ParseError("coordinates must be present and finite", row=r)
            ids.append(rid)
            coords.append((cx, cy))
            ys.append(_parse_float(rec[pos[response]], r, response))
            rows.append([_parse_float(rec[pos[c]], r, c) for c in cov_names])
    if not ids:
        raise SchemaMismatch(f"{path}: no data rows")
    return PixelDataset(
        ids=np.array(ids), coords=np.array(coords), X=np.array(rows, dtype=float),
        y=np.array(ys), columns=tuple(cov_names),
        distance_unit=meta.get("distance_unit", "unit"), response_name=response,
    )


def save_dataset(dataset: PixelDataset, path,
                 extra: Mapping[str, Iterable] | None = None) -> None:
    """Write ``dataset`` (plus optional extra columns) and its metadata sidecar."""
    extra = dict(extra or {})
    extra_cols = {k: list(v) for k, v in extra.items()}
    for k, v in extra_cols.items():
        if len(v) != dataset.n:
            raise SchemaMismatch(f"extra column {k!r} has wrong length")
    header = list(RESERVED_COLUMNS) + [dataset.response_name] + list(dataset.columns) + list(extra_cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            row = [str(int(dataset.ids[i])), _fmt(dataset.coords[i, 0]),
                   _fmt(dataset.coords[i, 1]), _fmt(dataset.y[i])]
            row.extend(_fmt(v) for v in dataset.X[i])
            row.extend(_fmt(v[i]) for v in extra_cols.values())
            w.writerow(row)
    write_metadata(path, {"distance_unit": dataset.distance_unit,
                          "response_name": dataset.response_name})


def read_columns(path) -> dict[str, list[str]]:
    """Raw column access for files with non-numeric extras (e.g. predictions)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        cols = {h: [] for h in header}
        for r, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", row=r)
            for h, v in zip(header, rec):
                cols[h].append(v)
    return cols
