"""Segment tables: per-segment VMAF scores and data usage for each encoding.

A table is rectangular: ``N`` segments, each offering the same number ``M``
of quality variants. Variant order within a segment is whatever the source
file used; nothing downstream assumes it is sorted.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from balance_qubo._io import atomic_write_text


class TableError(ValueError):
    """Raised when a segment table is malformed or fails validation."""


@dataclass(frozen=True)
class QualityVariant:
    label: str
    vmaf: float
    data_mb: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.vmaf) and 0.0 <= self.vmaf <= 100.0):
            raise TableError(f"variant {self.label!r}: vmaf {self.vmaf} outside [0, 100]")
        if not (math.isfinite(self.data_mb) and self.data_mb > 0.0):
            raise TableError(f"variant {self.label!r}: data_mb {self.data_mb} must be > 0")


@dataclass(frozen=True)
class SegmentTable:
    """Immutable ``N x M`` grid of :class:`QualityVariant`.

    ``segments[i][j]`` is quality level ``j`` of segment ``i`` (both 0-based).
    """

    segments: tuple[tuple[QualityVariant, ...], ...]

    def __post_init__(self) -> None:
        segs = tuple(tuple(s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise TableError("table has no segments")
        m = len(segs[0])
        for i, seg in enumerate(segs):
            if len(seg) != m:
                raise TableError(
                    f"non-rectangular table: segment {i + 1} has {len(seg)} levels, "
                    f"segment 1 has {m}"
                )
            labels = [v.label for v in seg]
            if len(set(labels)) != len(labels):
                raise TableError(f"segment {i + 1}: duplicate variant labels {labels}")
        if m < 2:
            raise TableError(f"need at least 2 quality levels per segment, got {m}")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def n_levels(self) -> int:
        return len(self.segments[0])

    def vmaf_matrix(self) -> np.ndarray:
        return np.array([[v.vmaf for v in seg] for seg in self.segments], dtype=float)

    def data_matrix(self) -> np.ndarray:
        return np.array([[v.data_mb for v in seg] for seg in self.segments], dtype=float)

    def labels(self, segment: int) -> list[str]:
        return [v.label for v in self.segments[segment]]

    def total_vmaf(self, choices: Sequence[int]) -> float:
        return sum(self.segments[i][j].vmaf for i, j in enumerate(choices))

    def total_data(self, choices: Sequence[int]) -> float:
        return sum(self.segments[i][j].data_mb for i, j in enumerate(choices))

    def min_usage(self) -> float:
        """Smallest achievable total data usage (cheapest variant per segment)."""
        return sum(min(v.data_mb for v in seg) for seg in self.segments)

    def max_usage(self) -> float:
        return sum(max(v.data_mb for v in seg) for seg in self.segments)

    def max_vmaf(self) -> float:
        return max(v.vmaf for seg in self.segments for v in seg)

    def to_dict(self) -> dict:
        return {
            "segments": [
                {"variants": [{"label": v.label, "vmaf": v.vmaf, "data_mb": v.data_mb} for v in seg]}
                for seg in self.segments
            ]
        }


@dataclass(frozen=True)
class DataBudget:
    """Total data cap ``d_max_mb`` and the quantization step used by slack arithmetic."""

    d_max_mb: float
    unit_mb: float = 0.01

    def __post_init__(self) -> None:
        if not (math.isfinite(self.d_max_mb) and self.d_max_mb > 0):
            raise TableError(f"d_max_mb must be > 0, got {self.d_max_mb}")
        if not (0 < self.unit_mb <= self.d_max_mb):
            raise TableError(f"unit_mb must satisfy 0 < unit_mb <= d_max_mb, got {self.unit_mb}")

    def to_units(self, mb: float) -> int:
        return int(round(mb / self.unit_mb))

    @property
    def max_units(self) -> int:
        return self.to_units(self.d_max_mb)


# Built-in two-segment reference instance: (label, vmaf, data_mb).
_REFERENCE_ROWS = (
    (("1080p", 92.90, 8.17), ("720p", 90.58, 5.46), ("480p", 87.13, 2.68), ("360p", 84.65, 0.96)),
    (("1080p", 95.69, 12.09), ("720p", 94.96, 7.76), ("480p", 93.14, 4.06), ("360p", 89.03, 1.63)),
)


def paper_instance() -> SegmentTable:
    """The built-in two-segment, four-level reference instance."""
    return SegmentTable(tuple(tuple(QualityVariant(*row) for row in seg) for seg in _REFERENCE_ROWS))


# Reference bitrate tiers (kbps), highest first.
BITRATE_TIERS_KBPS = (8000.0, 5000.0, 2500.0, 1000.0)


def synth_instance(
    n_segments: int, m_levels: int, seed: int, segment_seconds: float = 4.0
) -> SegmentTable:
    """Generate a deterministic synthetic table.

    Each segment draws a content complexity that scales its data usage and
    steepens its VMAF drop-off at low bitrates. Levels are ordered from the
    highest bitrate to the lowest; within a segment VMAF strictly increases
    with data usage. Values are rounded to two decimals so the default
    0.01 MB quantization is exact.
    """
    if n_segments < 1:
        raise TableError(f"n_segments must be >= 1, got {n_segments}")
    if m_levels < 2:
        raise TableError(f"m_levels must be >= 2, got {m_levels}")

    rng = np.random.default_rng(seed)
    if m_levels == len(BITRATE_TIERS_KBPS):
        kbps = np.array(BITRATE_TIERS_KBPS)
    else:
        kbps = np.geomspace(BITRATE_TIERS_KBPS[0], BITRATE_TIERS_KBPS[-1], m_levels)
    labels = [f"{k:.0f}kbps" for k in kbps]

    segments = []
    for _ in range(n_segments):
        complexity = rng.uniform(0.5, 2.0)
        top_vmaf = rng.uniform(88.0, 97.0)
        slope = rng.uniform(1.0, 3.0) * complexity
        jitter = rng.uniform(0.9, 1.1, size=m_levels)
        data = np.round(kbps * segment_seconds / 8000.0 * complexity * jitter, 2)
        vmaf = np.round(top_vmaf - slope * np.log2(kbps[0] / kbps), 2)
        # Rounding can create ties: force strict descent top-down, then lift the
        # tail bottom-up so the floors (0.01 MB, 0 VMAF) never break it.
        for j in range(1, m_levels):
            data[j] = min(data[j], round(data[j - 1] - 0.01, 2))
            vmaf[j] = min(vmaf[j], round(vmaf[j - 1] - 0.01, 2))
        data[-1] = max(data[-1], 0.01)
        vmaf[-1] = max(vmaf[-1], 0.0)
        for j in range(m_levels - 2, -1, -1):
            data[j] = max(data[j], round(data[j + 1] + 0.01, 2))
            vmaf[j] = max(vmaf[j], round(vmaf[j + 1] + 0.01, 2))
        vmaf = np.minimum(vmaf, 100.0)
        segments.append(
            tuple(QualityVariant(labels[j], float(vmaf[j]), float(data[j])) for j in range(m_levels))
        )
    return SegmentTable(tuple(segments))


CSV_HEADER = ("segment", "label", "vmaf", "data_mb")


def _parse_number(text: str, where: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise TableError(f"{where}: cannot parse {text!r} as a number") from None
    return value


def _variant(label: str, vmaf: float, data_mb: float, where: str) -> QualityVariant:
    try:
        return QualityVariant(label, vmaf, data_mb)
    except TableError as exc:
        raise TableError(f"{where}: {exc}") from None


def _load_csv(path: Path) -> SegmentTable:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise TableError(f"{path}: row 1: expected header {','.join(CSV_HEADER)}, got {header}")
        segments: list[list[QualityVariant]] = []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise TableError(f"{path}: row {rownum}: expected 4 columns, got {len(row)}")
            seg_text, label, vmaf_text, data_text = (c.strip() for c in row)
            try:
                seg = int(seg_text)
            except ValueError:
                raise TableError(f"{path}: row {rownum}, column segment: bad integer {seg_text!r}") from None
            if seg == len(segments) + 1:
                segments.append([])
            elif seg != len(segments) or seg < 1:
                raise TableError(
                    f"{path}: row {rownum}, column segment: segments must be numbered "
                    f"contiguously from 1 (got {seg} after {len(segments)})"
                )
            vmaf = _parse_number(vmaf_text, f"{path}: row {rownum}, column vmaf")
            data = _parse_number(data_text, f"{path}: row {rownum}, column data_mb")
            segments[-1].append(_variant(label, vmaf, data, f"{path}: row {rownum}"))
    return SegmentTable(tuple(tuple(s) for s in segments))


def _load_json(path: Path) -> SegmentTable:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TableError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("segments"), list):
        raise TableError(f"{path}: expected an object with a 'segments' list")
    segments = []
    for i, seg in enumerate(doc["segments"]):
        variants = seg.get("variants") if isinstance(seg, dict) else None
        if not isinstance(variants, list):
            raise TableError(f"{path}: segments[{i}]: missing 'variants' list")
        row = []
        for j, var in enumerate(variants):
            where = f"{path}: segments[{i}].variants[{j}]"
            if not isinstance(var, dict) or not {"label", "vmaf", "data_mb"} <= var.keys():
                raise TableError(f"{where}: need keys label, vmaf, data_mb")
            vmaf, data = var["vmaf"], var["data_mb"]
            if isinstance(vmaf, bool) or not isinstance(vmaf, (int, float)):
                raise TableError(f"{where}.vmaf: not a number")
            if isinstance(data, bool) or not isinstance(data, (int, float)):
                raise TableError(f"{where}.data_mb: not a number")
            row.append(_variant(str(var["label"]), float(vmaf), float(data), where))
        segments.append(tuple(row))
    return SegmentTable(tuple(segments))


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt not in ("csv", "json"):
        raise TableError(f"{path}: unknown table format {fmt!r} (expected csv or json)")
    return fmt


def load_table(path: str | Path, format: str | None = None) -> SegmentTable:
    """Load and validate a segment table from CSV or JSON.

    ``format`` defaults to the file extension. Errors name the offending row
    (CSV) or JSON path.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    if not path.is_file():
        raise TableError(f"{path}: no such file")
    try:
        return _load_csv(path) if fmt == "csv" else _load_json(path)
    except TableError as exc:
        if str(exc).startswith(str(path)):
            raise
        raise TableError(f"{path}: {exc}") from None


def table_csv_rows(table: SegmentTable) -> Iterable[list[str]]:
    yield list(CSV_HEADER)
    for i, seg in enumerate(table.segments, start=1):
        for v in seg:
            yield [str(i), v.label, repr(v.vmaf), repr(v.data_mb)]


def save_table(table: SegmentTable, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "json":
        text = json.dumps(table.to_dict(), indent=2) + "\n"
    else:
        from io import StringIO

        buf = StringIO()
        csv.writer(buf, lineterminator="\n").writerows(table_csv_rows(table))
        text = buf.getvalue()
    atomic_write_text(path, text)
