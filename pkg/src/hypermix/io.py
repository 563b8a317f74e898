"""File formats: point CSVs, fitted-model JSON, responsibility and summary tables.

All tabular data is CSV with ``#``-prefixed comment lines for metadata. Floats
are written with ``%.17g`` so that every value reads back bit-for-bit. Every
write goes to a temporary file in the target directory which is then renamed
over the destination, so an interrupted run never leaves a truncated file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from . import geometry as geo
from .errors import ContractError, DomainError
from .mixture import MixtureParams

Format = Literal["hyperboloid", "poincare"]

SCHEMA_VERSION = 1
#: Hyperboloid rows within this (scaled) distance of the sheet are renormalized on load.
LOAD_MEMBERSHIP_TOL = 1e-6


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary sibling file and an atomic rename."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(x: float) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Dataset:
    """Validated hyperboloid points with optional integer labels."""

    points: NDArray[np.float64]
    labels: NDArray[np.int64] | None
    source_format: Format

    @property
    def dim(self) -> int:
        return self.points.shape[1] - 1

    def __len__(self) -> int:
        return self.points.shape[0]


def _parse_rows(path: Path) -> list[tuple[int, list[str]]]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            rows.append((lineno, [c.strip() for c in stripped.split(",")]))
    return rows


def load_dataset(
    path: str | Path,
    fmt: Format = "hyperboloid",
    label_column: int | None = None,
) -> Dataset:
    """Read a CSV of coordinates (and optionally a label column).

    Parameters
    ----------
    path
        CSV file; blank lines and lines starting with ``#`` are skipped.
    fmt
        ``"hyperboloid"``: ``d+1`` ambient coordinates per row, time-like last.
        Rows off the sheet by at most ``1e-6`` (scaled) are renormalized by
        recomputing the last coordinate, rows further off are rejected. ``"poincare"``: ``d`` ball coordinates with
        ``|y| < 1``.
    label_column
        Index (negative counts from the end) of an integer label column, which
        is removed before the coordinates are read.

    Raises
    ------
    ContractError
        Malformed rows; the message names the 1-based line number.
    DomainError
        Points outside the model, again with the line number.
    """
    path = Path(path)
    if fmt not in ("hyperboloid", "poincare"):
        raise ContractError(f"unknown format {fmt!r}")
    rows = _parse_rows(path)
    if not rows:
        raise ContractError(f"{path}: no data rows")
    width = len(rows[0][1])
    coords, labels = [], []
    for lineno, cells in rows:
        if len(cells) != width:
            raise ContractError(f"{path}:{lineno}: expected {width} columns, got {len(cells)}")
        if label_column is not None:
            try:
                raw = cells.pop(label_column)
            except IndexError:
                raise ContractError(f"{path}:{lineno}: no column {label_column}") from None
            try:
                lab = float(raw)
            except ValueError:
                raise ContractError(f"{path}:{lineno}: label {raw!r} is not a number") from None
            if lab != int(lab) or lab < 0:
                raise ContractError(f"{path}:{lineno}: label {raw!r} is not a nonnegative integer")
            labels.append(int(lab))
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ContractError(f"{path}:{lineno}: non-numeric value in row") from None
        if not all(math.isfinite(v) for v in vals):
            raise ContractError(f"{path}:{lineno}: non-finite value in row")
        coords.append((lineno, vals))
    ncol = len(coords[0][1])
    if fmt == "hyperboloid":
        if ncol < 2:
            raise ContractError(f"{path}: hyperboloid rows need at least 2 coordinates")
        pts = np.array([v for _, v in coords])
        err = np.asarray(geo.membership_error(pts))
        for i, (lineno, _) in enumerate(coords):
            if pts[i, -1] <= 0.0:
                raise DomainError(f"{path}:{lineno}: last coordinate must be positive (upper sheet)")
            if err[i] > LOAD_MEMBERSHIP_TOL:
                raise DomainError(f"{path}:{lineno}: point violates <x,x>_L = -1 (error {err[i]:.3g})")
        # recompute the time coordinate; exact for points that were already on the sheet
        pts = geo.lift(pts[:, :-1])
    else:
        if ncol < 1:
            raise ContractError(f"{path}: poincare rows need at least 1 coordinate")
        ball = np.array([v for _, v in coords])
        norms = np.linalg.norm(ball, axis=1)
        for i, (lineno, _) in enumerate(coords):
            if norms[i] >= 1.0 - geo.BALL_MARGIN:
                raise DomainError(f"{path}:{lineno}: poincare point has norm {norms[i]:.6g} >= 1")
        pts = geo.from_poincare(ball)
    if pts.shape[1] - 1 > geo.MAX_DIM:
        raise ContractError(f"{path}: dimension {pts.shape[1] - 1} exceeds {geo.MAX_DIM}")
    lab_arr = np.array(labels, dtype=np.int64) if label_column is not None else None
    return Dataset(pts, lab_arr, fmt)


def points_csv(
    coords: NDArray,
    labels: Sequence[int] | None = None,
    comments: Iterable[str] = (),
) -> str:
    """Render coordinates (one row each) and an optional trailing label column."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    lines = [f"# {c}" for c in comments]
    for i, row in enumerate(coords):
        cells = [fmt_float(v) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_points(
    path: str | Path,
    points: NDArray,
    labels: Sequence[int] | None = None,
    fmt: Format = "hyperboloid",
) -> None:
    """Write hyperboloid points in ``fmt`` coordinates with a metadata comment header."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    coords = points if fmt == "hyperboloid" else geo.to_poincare(points)
    comments = [f"format={fmt}", f"dim={points.shape[1] - 1}"]
    if labels is not None:
        comments.append("last column: label")
    atomic_write_text(path, points_csv(coords, labels, comments))


# ---------------------------------------------------------------------------
# tables


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v))
    return str(v)


def table_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    """CSV text with a header row; columns default to first-seen key order."""
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_table(path: str | Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    atomic_write_text(path, table_csv(rows, columns))


def write_responsibilities(path: str | Path, resp: NDArray) -> None:
    """One row per observation, one column ``r<k>`` per component."""
    resp = np.asarray(resp, dtype=np.float64)
    K = resp.shape[1]
    rows = [{f"r{k}": v for k, v in enumerate(row)} for row in resp]
    write_table(path, rows, [f"r{k}" for k in range(K)])


# ---------------------------------------------------------------------------
# fitted models


@dataclass
class ModelFile:
    """Serializable fitted mixture: parameters, fit quality and (deterministic) metadata."""

    dim: int
    K: int
    weights: list[float]
    mus: list[list[float]]
    betas: list[float]
    box: list[float]
    loglik: float
    criteria: dict[str, float] = field(default_factory=dict)
    fit: dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_params(cls, params: MixtureParams, loglik: float, criteria: dict[str, float] | None = None,
                    **fit_meta: Any) -> "ModelFile":
        return cls(
            dim=params.dim,
            K=params.K,
            weights=[float(w) for w in params.weights],
            mus=[[float(v) for v in mu] for mu in params.mus],
            betas=[float(b) for b in params.betas],
            box=[float(params.box[0]), float(params.box[1])],
            loglik=float(loglik),
            criteria={k: float(v) for k, v in (criteria or {}).items()},
            fit=dict(fit_meta),
        )

    def params(self) -> MixtureParams:
        return MixtureParams(
            np.array(self.weights), np.array(self.mus), np.array(self.betas), (self.box[0], self.box[1])
        )

    def to_json(self) -> str:
        # json writes floats with repr(), the shortest string that round-trips
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelFile":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ContractError(f"model file is not valid JSON: {exc}") from None
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ContractError(f"unsupported model schema_version {version!r}")
        try:
            mf = cls(**raw)
        except TypeError as exc:
            raise ContractError(f"malformed model file: {exc}") from None
        if len(mf.weights) != mf.K or len(mf.betas) != mf.K or len(mf.mus) != mf.K:
            raise ContractError("model file component counts disagree with K")
        if any(len(m) != mf.dim + 1 for m in mf.mus):
            raise ContractError("model file locations disagree with dim")
        return mf


def save_model(path: str | Path, model: ModelFile) -> None:
    atomic_write_text(path, model.to_json())


def load_model(path: str | Path) -> ModelFile:
    return ModelFile.from_json(Path(path).read_text())


def meta_path(path: str | Path) -> Path:
    """Sibling file holding run-time metadata (timings) for an output ``path``."""
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_meta(path: str | Path, meta: dict[str, Any]) -> None:
    atomic_write_text(meta_path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")
