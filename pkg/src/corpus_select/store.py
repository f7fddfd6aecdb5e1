"""On-disk and in-memory data model for embedding views and utterance metadata.

Embedding file layout (little-endian throughout):

    bytes 0..3    magic "EMB1"
    bytes 4..7    u32 format version (currently 1)
    byte  8       u8 normalized flag (0 or 1)
    bytes 9..16   u64 row count N
    bytes 17..20  u32 dimension D
    bytes 21..    N*D float32 payload, row-major, no padding, no trailer

Manifests are UTF-8 JSON lines, one record per line with fields "id",
"duration_s" and "dataset". Alignment between metadata and matrices is
positional: line i of the manifest owns row i of every view, and row
counts are cross-checked when a corpus is assembled.

A corpus directory holds one `manifest.jsonl` plus one `<view>.emb` file
per view. A targets directory holds one subdirectory per target dataset,
each with its `<view>.emb` files and, optionally, its own `manifest.jsonl`
(used by the duration-matching baseline); a flat directory of `.emb` files
is treated as a single dataset named after the directory.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from corpus_select.errors import (
    BadMagic,
    DimensionMismatch,
    DuplicateId,
    EmptyTargets,
    MalformedLine,
    NonFiniteEntry,
    NonPositiveDuration,
    ZeroRowWarning,
)

MAGIC = b"EMB1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIBQI")  # magic, version, normalized flag, N, D

# Rows whose L2 norm is already this close to 1 are left untouched by
# normalization, which makes repeated normalization bitwise idempotent.
_UNIT_SNAP = 2e-7

_NORM_BLOCK = 65536


def _normalize_rows(rows: np.ndarray) -> tuple[np.ndarray, int]:
    """Unit-normalize rows of a float32 matrix; zero rows pass through.

    Returns the normalized copy and the number of zero rows encountered.
    Norms are computed in float64 and each row divided in float64 before
    casting back, so results are independent of blocking.
    """
    out = np.array(rows, dtype=np.float32, copy=True)
    zero_count = 0
    for lo in range(0, out.shape[0], _NORM_BLOCK):
        block = out[lo : lo + _NORM_BLOCK]
        norms = np.sqrt(np.einsum("ij,ij->i", block, block, dtype=np.float64))
        zero = norms == 0.0
        zero_count += int(zero.sum())
        fix = ~zero & (np.abs(norms - 1.0) > _UNIT_SNAP)
        if np.any(fix):
            block[fix] = (block[fix].astype(np.float64) / norms[fix, None]).astype(
                np.float32
            )
    return out, zero_count


@dataclass
class EmbeddingView:
    """A named N x D float32 matrix, one row per utterance.

    `normalized` records whether rows are unit-L2; cosine similarity then
    reduces to a dot product downstream.
    """

    name: str
    dims: int
    rows: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise DimensionMismatch(
                f"view {self.name!r}: rows must be 2-D, got shape {rows.shape}"
            )
        if self.dims <= 0 or rows.shape[1] != self.dims:
            raise DimensionMismatch(
                f"view {self.name!r}: dims={self.dims} but rows have {rows.shape[1]} columns"
            )
        if not np.isfinite(rows).all():
            r, c = np.argwhere(~np.isfinite(rows))[0]
            raise NonFiniteEntry(r, c, context=f"view {self.name!r}")
        if self.normalized and rows.shape[0]:
            norms = np.sqrt(np.einsum("ij,ij->i", rows, rows, dtype=np.float64))
            off = np.flatnonzero((norms != 0.0) & (np.abs(norms - 1.0) > 1e-4))
            if off.size:
                raise ValueError(
                    f"view {self.name!r} flagged normalized but row {off[0]} "
                    f"has L2 norm {norms[off[0]]:.6f}"
                )
        self.rows = rows

    @property
    def row_count(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class UtteranceRecord:
    """One manifest line: opaque id, positive duration, owning dataset tag."""

    id: str
    duration_s: float
    dataset: str


@dataclass
class CorpusManifest:
    """Ordered utterance records plus the views aligned to them row-for-row."""

    records: list[UtteranceRecord]
    views: dict[str, EmbeddingView]

    def __post_init__(self):
        if not self.views:
            raise DimensionMismatch("a corpus needs at least one view")
        n = len(self.records)
        for name, view in self.views.items():
            if view.row_count != n:
                raise DimensionMismatch(
                    f"view {name!r} has {view.row_count} rows but the manifest "
                    f"has {n} records"
                )
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateId(rec.id, -1)
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def durations(self) -> np.ndarray:
        return np.array([r.duration_s for r in self.records], dtype=np.float64)

    @property
    def view_matrices(self) -> dict[str, np.ndarray]:
        return {name: v.rows for name, v in self.views.items()}


@dataclass
class TargetDataset:
    """One target dataset: a name and one embedding matrix per view."""

    name: str
    views: dict[str, np.ndarray]

    def __post_init__(self):
        for view_name, mat in self.views.items():
            mat = np.asarray(mat, dtype=np.float32)
            if mat.ndim != 2 or mat.shape[0] == 0:
                raise EmptyTargets(
                    f"target dataset {self.name!r}, view {view_name!r}: "
                    f"matrix must be nonempty 2-D, got shape {mat.shape}"
                )
            self.views[view_name] = mat


@dataclass
class TargetSet:
    """Ordered target datasets; `compacted` marks k-means compaction."""

    datasets: list[TargetDataset]
    compacted: bool = False

    def __len__(self) -> int:
        return len(self.datasets)

    def view_names(self) -> list[str]:
        names: list[str] = []
        for ds in self.datasets:
            for name in ds.views:
                if name not in names:
                    names.append(name)
        return names


def _atomic_bytes(path: Path, payload_writer) -> None:
    """Write a file via temp-and-rename so interrupted runs leave no partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            payload_writer(fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def save_view(view: EmbeddingView, path: str | Path) -> None:
    """Write a view in the EMB1 format. The write is atomic."""

    def _write(fh):
        fh.write(
            _HEADER.pack(
                MAGIC,
                FORMAT_VERSION,
                1 if view.normalized else 0,
                view.row_count,
                view.dims,
            )
        )
        data = np.ascontiguousarray(view.rows, dtype="<f4")
        fh.write(data.tobytes())

    _atomic_bytes(Path(path), _write)


def load_view(path: str | Path, *, name: str | None = None, normalize: bool = True) -> EmbeddingView:
    """Load an EMB1 view file.

    Unless the header marks the rows normalized, rows are L2-normalized on
    load so that cosine equals dot product downstream; pass
    `normalize=False` to keep raw rows.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size or header[:4] != MAGIC:
            raise BadMagic(f"{path}: not an EMB1 embedding file")
        _, version, flag, n, d = _HEADER.unpack(header)
        if version != FORMAT_VERSION:
            raise BadMagic(f"{path}: unsupported format version {version}")
        if flag not in (0, 1):
            raise BadMagic(f"{path}: normalized flag must be 0 or 1, got {flag}")
        if d == 0:
            raise DimensionMismatch(f"{path}: header declares zero dimensions")
        expected = n * d * 4
        payload = os.fstat(fh.fileno()).st_size - _HEADER.size
        if payload != expected:
            raise DimensionMismatch(
                f"{path}: header declares {n}x{d} rows ({expected} payload bytes) "
                f"but the file holds {payload}"
            )
        data = np.fromfile(fh, dtype="<f4", count=n * d)
    rows = data.reshape(n, d)
    view = EmbeddingView(name if name is not None else path.stem, d, rows, normalized=bool(flag))
    if normalize and not view.normalized:
        view = l2_normalize(view)
    return view


def l2_normalize(view: EmbeddingView) -> EmbeddingView:
    """Scale every nonzero row to unit L2 norm.

    Zero rows stay zero and are reported through a ZeroRowWarning; their
    cosine with anything is defined as 0 downstream. Idempotent: rows that
    are already unit-norm are returned bitwise unchanged.
    """
    rows, zero_count = _normalize_rows(view.rows)
    if zero_count:
        warnings.warn(
            f"view {view.name!r}: {zero_count} zero rows left unnormalized",
            ZeroRowWarning,
            stacklevel=2,
        )
    return EmbeddingView(view.name, view.dims, rows, normalized=True)


def load_manifest(path: str | Path) -> list[UtteranceRecord]:
    """Parse a JSON-lines manifest; line order defines row order."""
    path = Path(path)
    records: list[UtteranceRecord] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                raise MalformedLine(lineno, "blank line")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise MalformedLine(lineno, "record must be a JSON object")
            utt_id = obj.get("id")
            duration = obj.get("duration_s")
            dataset = obj.get("dataset")
            if not isinstance(utt_id, str) or not utt_id:
                raise MalformedLine(lineno, "field 'id' must be a nonempty string")
            if isinstance(duration, bool) or not isinstance(duration, (int, float)):
                raise MalformedLine(lineno, "field 'duration_s' must be a number")
            if not isinstance(dataset, str):
                raise MalformedLine(lineno, "field 'dataset' must be a string")
            if not math.isfinite(duration) or duration <= 0:
                raise NonPositiveDuration(duration, lineno)
            if utt_id in seen:
                raise DuplicateId(utt_id, lineno)
            seen[utt_id] = lineno
            records.append(UtteranceRecord(utt_id, float(duration), dataset))
    return records


def save_manifest(records: Iterable[UtteranceRecord], path: str | Path) -> None:
    """Write records as JSON lines. The write is atomic."""

    def _write(fh):
        for rec in records:
            line = json.dumps(
                {"id": rec.id, "duration_s": rec.duration_s, "dataset": rec.dataset}
            )
            fh.write(line.encode("utf-8") + b"\n")

    _atomic_bytes(Path(path), _write)


def load_corpus(
    directory: str | Path,
    *,
    views: Sequence[str] | None = None,
    normalize: bool = True,
) -> CorpusManifest:
    """Load `manifest.jsonl` plus view files from a corpus directory.

    `views` selects view names to load (default: every `.emb` file,
    sorted by name).
    """
    directory = Path(directory)
    records = load_manifest(directory / "manifest.jsonl")
    if views is None:
        names = sorted(p.stem for p in directory.glob("*.emb"))
    else:
        names = list(views)
    loaded: dict[str, EmbeddingView] = {}
    for name in names:
        loaded[name] = load_view(directory / f"{name}.emb", name=name, normalize=normalize)
    return CorpusManifest(records, loaded)


def load_targets(
    directory: str | Path,
    *,
    views: Sequence[str] | None = None,
    normalize: bool = True,
) -> TargetSet:
    """Load a targets directory into a TargetSet.

    Subdirectories become datasets in sorted name order; a flat directory
    of `.emb` files becomes a single dataset named after the directory.
    """
    directory = Path(directory)
    subdirs = sorted(p for p in directory.iterdir() if p.is_dir())
    if not subdirs:
        subdirs = [directory]
    datasets: list[TargetDataset] = []
    for sub in subdirs:
        if views is None:
            names = sorted(p.stem for p in sub.glob("*.emb"))
        else:
            names = list(views)
        mats: dict[str, np.ndarray] = {}
        for name in names:
            view = load_view(sub / f"{name}.emb", name=name, normalize=normalize)
            mats[name] = view.rows
        datasets.append(TargetDataset(sub.name, mats))
    return TargetSet(datasets)


def save_targets(targets: TargetSet, directory: str | Path, *, normalized: bool = True) -> None:
    """Write each dataset's views under `<directory>/<dataset>/<view>.emb`."""
    directory = Path(directory)
    for ds in targets.datasets:
        for view_name, mat in ds.views.items():
            view = EmbeddingView(view_name, mat.shape[1], mat, normalized=normalized)
            save_view(view, directory / ds.name / f"{view_name}.emb")


def load_target_durations(directory: str | Path) -> np.ndarray:
    """Concatenate duration_s from every dataset manifest under a targets dir.

    Used by the duration-matching baseline, which needs target durations
    rather than embeddings.
    """
    directory = Path(directory)
    subdirs = sorted(p for p in directory.iterdir() if p.is_dir())
    if not subdirs:
        subdirs = [directory]
    durations: list[float] = []
    for sub in subdirs:
        manifest = sub / "manifest.jsonl"
        if manifest.exists():
            durations.extend(r.duration_s for r in load_manifest(manifest))
    if not durations:
        raise EmptyTargets(f"{directory}: no dataset manifest with durations found")
    return np.array(durations, dtype=np.float64)
