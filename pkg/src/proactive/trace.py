"""RSRP trace ingestion: parse, quantize, and estimate per-slot state probabilities.

Input CSV header: ``pass_id,timestamp_s[,distance_m],rsrp_dbm``. Each pass is
one traversal of the same track; slot numbers restart at the start of every
pass, so slot ``j`` of every pass maps to slot index ``j mod Q``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

STATE_NAMES = ("cell edge", "mid cell", "good", "excellent")
REQUIRED_COLUMNS = ("pass_id", "timestamp_s", "rsrp_dbm")


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    pass_id: str
    timestamp: float
    rsrp: float
    position: float | None = None


@dataclass(frozen=True)
class QuantizerThresholds:
    """Cut points in dBm, strictly decreasing. A value equal to a cut point
    belongs to the better state."""

    cuts: tuple[float, ...] = (-80.0, -90.0, -100.0)

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.cuts, self.cuts[1:])):
            raise ValueError(f"cut points must be strictly decreasing: {self.cuts}")

    @property
    def n_states(self) -> int:
        return len(self.cuts) + 1


DEFAULT_THRESHOLDS = QuantizerThresholds()


def quantize_rsrp(rsrp: float, thresholds: QuantizerThresholds = DEFAULT_THRESHOLDS) -> int:
    """State index ``1..K`` with 1 the worst (cell edge for the defaults)."""
    return 1 + sum(rsrp >= c for c in thresholds.cuts)


@dataclass
class ParseReport:
    skipped: list[tuple[int, str]] = field(default_factory=list)


def parse_trace(path, report: ParseReport | None = None) -> list[TraceRecord]:
    """Read a trace CSV. Malformed rows are skipped and logged with their line number."""
    report = report if report is not None else ParseReport()
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise TraceError(f"{path}: missing column {col!r}")
        reader.fieldnames = header
        has_pos = "distance_m" in header
        records = []
        last: dict[str, float] = {}
        for row in reader:
            line = reader.line_num
            try:
                ts = float(row["timestamp_s"])
                rsrp = float(row["rsrp_dbm"])
                pos = float(row["distance_m"]) if has_pos and row.get("distance_m") else None
                if not (math.isfinite(ts) and math.isfinite(rsrp)):
                    raise ValueError("non-finite value")
                if pos is not None and not (math.isfinite(pos) and pos >= 0):
                    raise ValueError(f"bad distance {pos}")
            except (TypeError, ValueError) as exc:
                report.skipped.append((line, str(exc)))
                log.warning("%s line %d skipped: %s", path, line, exc)
                continue
            pid = (row["pass_id"] or "").strip()
            if pid in last and ts < last[pid]:
                raise TraceError(
                    f"{path} line {line}: timestamps go backwards within pass {pid!r}"
                )
            last[pid] = ts
            records.append(TraceRecord(pid, ts, rsrp, pos))
    if not records:
        raise TraceError(f"{path}: no valid rows")
    return records


@dataclass
class Profile:
    """Per-slot state probabilities ``probs[s][k]`` plus coverage details."""

    probs: np.ndarray  # (Q, K)
    counts: np.ndarray  # (Q,) records per slot index
    interpolated: list[int]

    @property
    def period(self) -> int:
        return self.probs.shape[0]

    def to_fragment(self) -> dict:
        """Channel section in scenario-config form (single user) plus a coverage report."""
        return {
            "channel": {
                "period": self.period,
                "probs": [[[float(p) for p in row]] for row in self.probs],
            },
            "coverage": {
                "records_per_slot": [int(c) for c in self.counts],
                "interpolated_slots": list(self.interpolated),
            },
        }

    def channel_model(self, gains):
        from .model import ChannelModel

        return ChannelModel.cyclic([tuple(gains)], [[tuple(row)] for row in self.probs])


def slot_indices(records, slot_length: float, Q: int, by: str = "time") -> np.ndarray:
    if slot_length <= 0:
        raise ValueError("slot length must be positive")
    if by not in ("time", "distance"):
        raise ValueError(f"unknown slotting {by!r}")
    start: dict[str, float] = {}
    out = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        if by == "distance":
            if rec.position is None:
                raise TraceError("distance slotting needs a distance_m column")
            x = rec.position
        else:
            x = rec.timestamp - start.setdefault(rec.pass_id, rec.timestamp)
        out[i] = int(math.floor(x / slot_length)) % Q
    return out


def build_profile(records, slot_length: float, Q: int, by: str = "time",
                  thresholds: QuantizerThresholds = DEFAULT_THRESHOLDS) -> Profile:
    if Q < 1:
        raise ValueError("period must be >= 1")
    K = thresholds.n_states
    slots = slot_indices(records, slot_length, Q, by)
    counts = np.zeros((Q, K))
    for s, rec in zip(slots, records):
        counts[s, quantize_rsrp(rec.rsrp, thresholds) - 1] += 1
    per_slot = counts.sum(axis=1)
    filled = np.flatnonzero(per_slot > 0)
    if filled.size == 0:
        raise TraceError("every slot index is empty")
    probs = np.zeros((Q, K))
    probs[filled] = counts[filled] / per_slot[filled, None]
    empty = [int(s) for s in range(Q) if per_slot[s] == 0]
    for s in empty:
        # linear interpolation between the nearest filled slots, cyclically
        prev = max((f for f in filled if f < s), default=filled[-1] - Q)
        nxt = min((f for f in filled if f > s), default=filled[0] + Q)
        a = (s - prev) / (nxt - prev)
        probs[s] = (1 - a) * probs[prev % Q] + a * probs[nxt % Q]
    if empty:
        log.warning("slot indices %s had no records; interpolated", empty)
    return Profile(probs, per_slot.astype(int), empty)


def average_profile(records, thresholds: QuantizerThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """State frequencies over the whole trace, worst state first."""
    counts = np.zeros(thresholds.n_states)
    for rec in records:
        counts[quantize_rsrp(rec.rsrp, thresholds) - 1] += 1
    return counts / counts.sum()


def write_trace(path, records) -> None:
    """Write records in the ingestion format (used for synthetic traces)."""
    has_pos = any(r.position is not None for r in records)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pass_id", "timestamp_s"] + (["distance_m"] if has_pos else []) + ["rsrp_dbm"])
        for r in records:
            row = [r.pass_id, r.timestamp]
            if has_pos:
                row.append("" if r.position is None else r.position)
            w.writerow(row + [r.rsrp])
