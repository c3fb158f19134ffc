"""Ingestion of multi-speed gait kinematics and phase normalization.

Tables arrive as CSV with one row per sample. Each cycle is identified by
``(subject_id, speed, cycle_id)`` and carries hip, knee and ankle angles in
degrees. Cycles are resampled onto a uniform phase grid and averaged per
walking speed.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyTable,
    InvalidRow,
    MalformedNumber,
    MissingColumn,
    MixedResolution,
    TooFewSamples,
)

JOINTS = ("hip", "knee", "ankle")
ANGLE_COLUMNS = ("hip_deg", "knee_deg", "ankle_deg")
REQUIRED_COLUMNS = ("subject_id", "speed", "cycle_id", "phase_or_time") + ANGLE_COLUMNS
DEFAULT_N_POINTS = 21
DEFAULT_GROUP_TOLERANCE = 0.024


@dataclass(frozen=True)
class GaitTable:
    subject_id: tuple[str, ...]
    speed: np.ndarray
    cycle_id: np.ndarray
    phase_or_time: np.ndarray
    angles_deg: np.ndarray  # (n_rows, 3)
    time_indexed: bool = False

    def __len__(self) -> int:
        return len(self.subject_id)

    def cycles(self):
        """Yield ``(key, row_indices)`` per cycle in order of first appearance."""
        groups: dict[tuple, list[int]] = {}
        for i, key in enumerate(zip(self.subject_id, self.speed.tolist(), self.cycle_id.tolist())):
            groups.setdefault(key, []).append(i)
        for key, rows in groups.items():
            yield key, np.asarray(rows)


@dataclass(frozen=True)
class PhaseCycle:
    speed: float
    angles: np.ndarray  # (3, n_points) degrees
    stride_duration_s: float | None = None

    @property
    def n_points(self) -> int:
        return self.angles.shape[1]


@dataclass(frozen=True)
class MeanGaitProfile:
    speed: float
    angles: np.ndarray  # (3, n_points) degrees
    stride_duration_s: float | None = None
    n_cycles: int = 1

    @property
    def n_points(self) -> int:
        return self.angles.shape[1]


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise MalformedNumber(row, column, text) from None
    if not math.isfinite(value):
        raise MalformedNumber(row, column, text)
    return value


def parse_gait_csv(data: bytes | str) -> GaitTable:
    """Parse a gait kinematics CSV.

    The column ``phase_or_time`` may also be named ``phase`` or ``time``.
    With the ambiguous name, a table is treated as time-indexed when any
    cycle spans more than one unit.

    Row indices in error messages are 1-based data rows (the header is not
    counted).
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyTable("no header row") from None

    time_hint = None
    if "phase_or_time" not in header:
        for alias, hint in (("phase", False), ("time", True)):
            if alias in header:
                header[header.index(alias)] = "phase_or_time"
                time_hint = hint
                break
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise MissingColumn(col)
    idx = {col: header.index(col) for col in REQUIRED_COLUMNS}

    subjects, speeds, cycle_ids, phases, angles = [], [], [], [], []
    for row_no, cells in enumerate(reader, start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) < len(header):
            raise InvalidRow(row_no, f"expected {len(header)} cells, got {len(cells)}")
        speed = _parse_float(cells[idx["speed"]], row_no, "speed")
        if speed <= 0:
            raise InvalidRow(row_no, f"speed must be positive, got {speed}")
        cid_text = cells[idx["cycle_id"]].strip()
        try:
            cid = int(cid_text)
        except ValueError:
            raise MalformedNumber(row_no, "cycle_id", cid_text) from None
        subjects.append(cells[idx["subject_id"]].strip())
        speeds.append(speed)
        cycle_ids.append(cid)
        phases.append(_parse_float(cells[idx["phase_or_time"]], row_no, "phase_or_time"))
        angles.append([_parse_float(cells[idx[c]], row_no, c) for c in ANGLE_COLUMNS])

    if not subjects:
        raise EmptyTable("table has a header but no data rows")

    table = GaitTable(
        subject_id=tuple(subjects),
        speed=np.asarray(speeds, dtype=float),
        cycle_id=np.asarray(cycle_ids, dtype=int),
        phase_or_time=np.asarray(phases, dtype=float),
        angles_deg=np.asarray(angles, dtype=float),
    )
    spans = []
    for _, rows in table.cycles():
        ph = table.phase_or_time[rows]
        bad = np.nonzero(np.diff(ph) < 0)[0]
        if bad.size:
            raise InvalidRow(int(rows[bad[0] + 1]) + 1, "phase/time decreases within a cycle")
        spans.append(ph[-1] - ph[0])
    time_indexed = time_hint if time_hint is not None else max(spans) > 1.0 + 1e-9
    return replace(table, time_indexed=bool(time_indexed))


def resample_phase(phase: Sequence[float], angles, n_points: int = DEFAULT_N_POINTS,
                   speed: float = float("nan"), time_indexed: bool = False) -> PhaseCycle:
    """Linearly interpolate one cycle onto ``n_points`` uniform phase samples.

    The first and last input samples define phase 0 and 1. The output grid is
    ``k / n_points`` for ``k = 0 .. n_points - 1``; phase 1 is the start of the
    next cycle and is therefore excluded.

    Parameters
    ----------
    phase : (m,) array
        Phase fractions or timestamps, non-decreasing.
    angles : (3, m) array
        Joint angles, one row per joint.
    """
    phase = np.asarray(phase, dtype=float)
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    if phase.size < 2:
        raise TooFewSamples(f"need at least 2 samples, got {phase.size}")
    if angles.shape[-1] != phase.size:
        raise ValueError(f"angles shape {angles.shape} does not match {phase.size} samples")
    if n_points < 2:
        raise TooFewSamples(f"n_points must be >= 2, got {n_points}")
    span = phase[-1] - phase[0]
    if not span > 0:
        raise TooFewSamples("cycle has zero phase span")
    norm = (phase - phase[0]) / span
    grid = np.arange(n_points) / n_points
    out = np.vstack([np.interp(grid, norm, row) for row in angles])
    return PhaseCycle(speed=float(speed), angles=out,
                      stride_duration_s=float(span) if time_indexed else None)


def table_cycles(table: GaitTable, n_points: int = DEFAULT_N_POINTS) -> list[PhaseCycle]:
    out = []
    for (_, speed, _), rows in table.cycles():
        out.append(resample_phase(table.phase_or_time[rows], table.angles_deg[rows].T,
                                  n_points, speed=speed, time_indexed=table.time_indexed))
    return out


def aggregate_mean(cycles: Iterable[PhaseCycle],
                   group_tolerance: float = DEFAULT_GROUP_TOLERANCE) -> list[MeanGaitProfile]:
    """Average cycles per walking speed.

    Cycles are sorted by speed and a new group starts whenever a speed exceeds
    the first speed of the current group by more than ``group_tolerance``.
    """
    cycles = list(cycles)
    if group_tolerance < 0:
        raise ValueError("group_tolerance must be >= 0")
    if not cycles:
        return []
    sizes = {c.n_points for c in cycles}
    if len(sizes) > 1:
        raise MixedResolution(f"cycles have differing n_points: {sorted(sizes)}")
    # canonical order makes the floating-point sums permutation invariant
    cycles.sort(key=lambda c: (c.speed, c.angles.tobytes()))

    groups: list[list[PhaseCycle]] = []
    for c in cycles:
        if groups and c.speed - groups[-1][0].speed <= group_tolerance:
            groups[-1].append(c)
        else:
            groups.append([c])

    profiles = []
    for g in groups:
        durations = [c.stride_duration_s for c in g if c.stride_duration_s is not None]
        profiles.append(MeanGaitProfile(
            speed=float(np.mean([c.speed for c in g])),
            angles=np.mean(np.stack([c.angles for c in g]), axis=0),
            stride_duration_s=float(np.mean(durations)) if durations else None,
            n_cycles=len(g),
        ))
    return profiles


def profiles_from_csv(data: bytes | str, n_points: int = DEFAULT_N_POINTS,
                      group_tolerance: float = DEFAULT_GROUP_TOLERANCE) -> list[MeanGaitProfile]:
    """parse -> resample -> aggregate in one call."""
    return aggregate_mean(table_cycles(parse_gait_csv(data), n_points), group_tolerance)


def profiles_to_json(profiles: Sequence[MeanGaitProfile]) -> str:
    doc = {
        "units": "degrees",
        "joints": list(JOINTS),
        "profiles": [
            {
                "speed": p.speed,
                "n_points": p.n_points,
                "n_cycles": p.n_cycles,
                "stride_duration_s": p.stride_duration_s,
                "angles_deg": p.angles.tolist(),
            }
            for p in profiles
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def profiles_from_json(text: str) -> list[MeanGaitProfile]:
    doc = json.loads(text)
    return [
        MeanGaitProfile(
            speed=float(p["speed"]),
            angles=np.asarray(p["angles_deg"], dtype=float),
            stride_duration_s=p.get("stride_duration_s"),
            n_cycles=int(p.get("n_cycles", 1)),
        )
        for p in doc["profiles"]
    ]
