"""Missing-data handling, temporal current/trend summaries and grid resampling."""
from __future__ import annotations

import csv
import math
import shlex
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import PixelDataset
from .errors import (
    AllColumnsDropped,
    ConfigError,
    EmptySeries,
    InsufficientDonors,
    NoOverlap,
    ParseError,
    SchemaMismatch,
)


def drop_sparse_covariates(dataset: PixelDataset, threshold: float = 0.28) -> PixelDataset:
    """Remove covariates whose missing fraction is strictly above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    n_missing = dataset.mask.sum(axis=0)
    # relative slack so that e.g. 28 of 100 is not pushed over 0.28 by rounding
    limit = threshold * dataset.n * (1 + 1e-12)
    keep = [j for j in range(dataset.p) if not n_missing[j] > limit]
    if not keep:
        raise AllColumnsDropped(f"every covariate exceeds {threshold:.0%} missing")
    return dataset.replace(X=dataset.X[:, keep],
                           columns=tuple(dataset.columns[j] for j in keep))


def _nearest_donors(tree, donor_coords, donor_ids, point, k):
    """Indices (into donors) of the k nearest donors, ties broken by lower id."""
    m = donor_coords.shape[0]
    kk = min(k + 1, m)
    d, idx = tree.query(point, k=kk)
    d = np.atleast_1d(d)
    idx = np.atleast_1d(idx)
    if kk > k and d[k] > d[k - 1]:
        return idx[:k]
    # a tie may straddle rank k: gather every donor at or inside the k-th radius
    radius = d[k - 1]
    cand = np.asarray(tree.query_ball_point(point, r=radius * (1 + 1e-12) + 1e-300), dtype=np.int64)
    dist = np.hypot(donor_coords[cand, 0] - point[0], donor_coords[cand, 1] - point[1])
    order = np.lexsort((donor_ids[cand], dist))
    return cand[order[:k]]


def knn_impute(dataset: PixelDataset, k: int = 10) -> PixelDataset:
    """Fill each missing covariate with the mean of its k nearest observed pixels.

    Columns are handled independently and only observed values act as donors.
    """
    if k < 1:
        raise ValueError("k must be positive")
    X = dataset.X.copy()
    for j in range(dataset.p):
        miss = dataset.mask[:, j]
        if not miss.any():
            continue
        obs = np.flatnonzero(~miss)
        if obs.size < k:
            raise InsufficientDonors(
                f"column {dataset.columns[j]!r} has {obs.size} observed values, need {k}")
        donor_coords = dataset.coords[obs]
        donor_ids = dataset.ids[obs]
        tree = cKDTree(donor_coords)
        vals = dataset.X[obs, j]
        for i in np.flatnonzero(miss):
            nb = _nearest_donors(tree, donor_coords, donor_ids, dataset.coords[i], k)
            X[i, j] = vals[nb].mean()
    return dataset.replace(X=X)


# --------------------------------------------------------------------------
# temporal summaries

@dataclass(frozen=True)
class TemporalSeries:
    pixel_id: int
    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if t.shape != v.shape:
            raise ValueError("t and values must have equal length")
        if np.any(t < 0):
            raise ValueError("t counts days before ignition and must be >= 0")
        if len(np.unique(t)) != t.size:
            raise ValueError(f"duplicate t values for pixel {self.pixel_id}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class TrendSummary:
    current: float
    trend: float


def fit_trend(series: TemporalSeries) -> TrendSummary:
    """Least-squares line through (t, value); intercept is the value at ignition.

    ``t`` counts days *before* ignition, so a positive trend means the
    variable was larger further in the past.
    """
    t, v = series.t, series.values
    if t.size == 0:
        raise EmptySeries(f"pixel {series.pixel_id} has no observations")
    vbar = v.mean()
    tc = t - t.mean()
    sxx = float(tc @ tc)
    if sxx == 0.0:
        return TrendSummary(float(vbar), 0.0)
    slope = float(tc @ (v - vbar)) / sxx
    return TrendSummary(float(vbar - slope * t.mean()), slope)


def read_temporal(path) -> list[tuple[int, float, str, float]]:
    """Long-format rows ``id,t_days_before,variable,value``."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        need = ["id", "t_days_before", "variable", "value"]
        if any(c not in header for c in need):
            raise SchemaMismatch(f"{path}: temporal file needs columns {need}")
        pos = [header.index(c) for c in need]
        for r, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                out.append((int(rec[pos[0]]), float(rec[pos[1]]), rec[pos[2]].strip(),
                            float(rec[pos[3]])))
            except (ValueError, IndexError):
                raise ParseError("malformed temporal record", row=r) from None
    return out


def add_trend_covariates(dataset: PixelDataset, records, variable: str) -> PixelDataset:
    """Append ``<variable>_current`` and ``<variable>_trend`` columns.

    Pixels with no observations of ``variable`` get missing values so the
    imputation step can fill them.
    """
    by_pixel: dict[int, list[tuple[float, float]]] = {}
    for pid, t, var, val in records:
        if var == variable and math.isfinite(val):
            by_pixel.setdefault(pid, []).append((t, val))
    cur = np.full(dataset.n, np.nan)
    trd = np.full(dataset.n, np.nan)
    for i, pid in enumerate(dataset.ids):
        obs = by_pixel.get(int(pid))
        if not obs:
            continue
        t, v = zip(*sorted(obs))
        s = fit_trend(TemporalSeries(int(pid), t, v))
        cur[i], trd[i] = s.current, s.trend
    names = (f"{variable}_current", f"{variable}_trend")
    if any(nm in dataset.columns for nm in names):
        raise SchemaMismatch(f"columns {names} already present")
    return dataset.replace(X=np.column_stack([dataset.X, cur, trd]),
                           columns=dataset.columns + names)


# --------------------------------------------------------------------------
# grids

@dataclass(frozen=True, eq=False)
class Grid:
    """Axis-aligned raster; ``values[iy, ix]`` covers
    ``[x0 + ix*dx, x0 + (ix+1)*dx] x [y0 + iy*dy, y0 + (iy+1)*dy]``.
    NaN marks a missing cell."""

    x0: float
    y0: float
    dx: float
    dy: float
    values: np.ndarray

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("cell sizes must be positive")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("grid values must be 2-D (ny, nx)")
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def extent(self):
        return (self.x0, self.x0 + self.nx * self.dx, self.y0, self.y0 + self.ny * self.dy)

    def centers(self):
        cx = self.x0 + (np.arange(self.nx) + 0.5) * self.dx
        cy = self.y0 + (np.arange(self.ny) + 0.5) * self.dy
        return cx, cy

    @classmethod
    def empty_like(cls, x0, y0, dx, dy, nx, ny):
        return cls(x0, y0, dx, dy, np.full((ny, nx), np.nan))

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


def _check_overlap(src: Grid, dst: Grid):
    sx0, sx1, sy0, sy1 = src.extent
    dx0, dx1, dy0, dy1 = dst.extent
    if dx1 <= sx0 or dx0 >= sx1 or dy1 <= sy0 or dy0 >= sy1:
        raise NoOverlap("source and destination grids do not overlap")


def _covered(src: Grid, dst: Grid):
    sx0, sx1, sy0, sy1 = src.extent
    cx, cy = dst.centers()
    return (cy >= sy0) & (cy <= sy1), (cx >= sx0) & (cx <= sx1)


def resample_bilinear(src: Grid, dst: Grid) -> Grid:
    _check_overlap(src, dst)
    cx, cy = dst.centers()
    okx = (cx >= src.extent[0]) & (cx <= src.extent[1])
    oky = (cy >= src.extent[2]) & (cy <= src.extent[3])
    u = np.clip((cx - src.x0) / src.dx - 0.5, 0, src.nx - 1)
    v = np.clip((cy - src.y0) / src.dy - 0.5, 0, src.ny - 1)
    i0 = np.minimum(np.floor(u).astype(int), max(src.nx - 2, 0))
    j0 = np.minimum(np.floor(v).astype(int), max(src.ny - 2, 0))
    i1 = np.minimum(i0 + 1, src.nx - 1)
    j1 = np.minimum(j0 + 1, src.ny - 1)
    fu = u - i0
    fv = v - j0
    S = src.values
    out = np.full((dst.ny, dst.nx), np.nan)
    corners = [
        (j0[:, None], i0[None, :], (1 - fv)[:, None] * (1 - fu)[None, :]),
        (j0[:, None], i1[None, :], (1 - fv)[:, None] * fu[None, :]),
        (j1[:, None], i0[None, :], fv[:, None] * (1 - fu)[None, :]),
        (j1[:, None], i1[None, :], fv[:, None] * fu[None, :]),
    ]
    num = np.zeros_like(out)
    den = np.zeros_like(out)
    for jj, ii, w in corners:
        val = S[jj, ii]
        present = ~np.isnan(val)
        num += np.where(present, w * np.nan_to_num(val), 0.0)
        den += np.where(present, w, 0.0)
    # renormalise over present corners; all-missing neighbourhoods stay NaN
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = num / den
    vals = np.where(den > 0, vals, np.nan)
    ok = oky[:, None] & okx[None, :]
    out[ok] = vals[ok]
    return Grid(dst.x0, dst.y0, dst.dx, dst.dy, out)


def _overlap_1d(s0, ds, ns, d0, dd, nd):
    se = s0 + ds * np.arange(ns + 1)
    de = d0 + dd * np.arange(nd + 1)
    lo = np.maximum(de[:-1, None], se[None, :-1])
    hi = np.minimum(de[1:, None], se[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def resample_area_weighted(src: Grid, dst: Grid) -> Grid:
    _check_overlap(src, dst)
    ox = _overlap_1d(src.x0, src.dx, src.nx, dst.x0, dst.dx, dst.nx)
    oy = _overlap_1d(src.y0, src.dy, src.ny, dst.y0, dst.dy, dst.ny)
    present = ~src.missing
    V = np.where(present, src.values, 0.0)
    num = oy @ V @ ox.T
    den = oy @ present.astype(float) @ ox.T
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / den, np.nan)
    oky, okx = _covered(src, dst)
    out[~(oky[:, None] & okx[None, :])] = np.nan
    return Grid(dst.x0, dst.y0, dst.dx, dst.dy, out)


def resample_nearest(src: Grid, dst: Grid) -> Grid:
    _check_overlap(src, dst)
    cx, cy = dst.centers()
    ix = np.clip(np.floor((cx - src.x0) / src.dx).astype(int), 0, src.nx - 1)
    iy = np.clip(np.floor((cy - src.y0) / src.dy).astype(int), 0, src.ny - 1)
    out = src.values[iy[:, None], ix[None, :]].copy()
    oky, okx = _covered(src, dst)
    out[~(oky[:, None] & okx[None, :])] = np.nan
    return Grid(dst.x0, dst.y0, dst.dx, dst.dy, out)


RESAMPLERS = {
    "bilinear": resample_bilinear,
    "area": resample_area_weighted,
    "area_weighted": resample_area_weighted,
    "nearest": resample_nearest,
}


def read_grid(path) -> Grid:
    """Grid text file: ``# grid x0=.. y0=.. dx=.. dy=..`` then one CSV line per row (iy = 0 first)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# grid"):
        raise ParseError(f"{path}: missing '# grid' header", row=1)
    hdr = dict(tok.split("=", 1) for tok in lines[0][len("# grid"):].split())
    try:
        x0, y0, dx, dy = (float(hdr[k]) for k in ("x0", "y0", "dx", "dy"))
    except KeyError as e:
        raise ParseError(f"{path}: header lacks {e}", row=1) from None
    rows = []
    for r, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rows.append([float(f) if f.strip() else math.nan for f in line.split(",")])
        except ValueError:
            raise ParseError(f"{path}: bad grid value", row=r) from None
    if len({len(r) for r in rows}) != 1:
        raise ParseError(f"{path}: ragged grid rows")
    return Grid(x0, y0, dx, dy, np.array(rows))


def write_grid(grid: Grid, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# grid x0={grid.x0!r} y0={grid.y0!r} dx={grid.dx!r} dy={grid.dy!r}\n")
        for row in grid.values:
            fh.write(",".join("" if math.isnan(v) else repr(float(v)) for v in row) + "\n")


# --------------------------------------------------------------------------
# pipeline manifest

@dataclass(frozen=True)
class Step:
    name: str
    params: dict


KNOWN_STEPS = ("drop_sparse", "impute", "trend", "resample")


def parse_manifest(text: str) -> list[Step]:
    """One step per line: ``name key=value ...``; ``#`` starts a comment."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = shlex.split(line)
        name, rest = toks[0], toks[1:]
        if name not in KNOWN_STEPS:
            raise ConfigError(f"manifest line {lineno}: unknown step {name!r}")
        params = {}
        for tok in rest:
            if "=" not in tok:
                raise ConfigError(f"manifest line {lineno}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            params[k] = v
        steps.append(Step(name, params))
    return steps


def run_pipeline(dataset: PixelDataset | None, steps: Sequence[Step],
                 temporal_records=None, base_dir=".") -> PixelDataset | None:
    """Apply manifest steps in order. ``resample`` steps operate on grid files
    named in the step (``src=``, ``dst=``, ``out=``) and leave the dataset alone."""
    base = Path(base_dir)
    for step in steps:
        p = step.params
        if step.name == "drop_sparse":
            dataset = drop_sparse_covariates(dataset, float(p.get("threshold", 0.28)))
        elif step.name == "impute":
            dataset = knn_impute(dataset, int(p.get("k", 10)))
        elif step.name == "trend":
            if temporal_records is None:
                raise ConfigError("trend step needs a temporal file")
            if "var" not in p:
                raise ConfigError("trend step needs var=NAME")
            dataset = add_trend_covariates(dataset, temporal_records, p["var"])
        elif step.name == "resample":
            method = p.get("method", "bilinear")
            if method not in RESAMPLERS:
                raise ConfigError(f"unknown resampling method {method!r}")
            try:
                src = read_grid(base / p["src"])
                dst = read_grid(base / p["dst"])
                out = base / p["out"]
            except KeyError as e:
                raise ConfigError(f"resample step needs {e}") from None
            write_grid(RESAMPLERS[method](src, dst), out)
    return dataset
