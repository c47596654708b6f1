"""Run traces and their line-delimited JSON / CSV persistence.

A jsonl trace is::

    {"type": "header", "schema": "agc-trace/1.0", ...}
    {"type": "species", "id": ..., "molecule": ...}      (molecular modes)
    {"type": "snapshot", "step": 0, ...}
    {"type": "event", "step": 1, ...}
    {"type": "snapshot", "step": 1, ...}
    ...
    {"type": "end", "halted": ..., "reason": ...}

Records are written with sorted keys and fixed separators so identical
traces serialize to identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import CorruptTrace, IoFailure

SCHEMA = "agc-trace/1.0"
SCHEMA_MAJOR = 1


@dataclass
class Snapshot:
    step: int
    regions: dict[int, dict[str, int]]
    structure: str | None = None
    expelled: dict[str, int] = field(default_factory=dict)
    stats: dict[int, dict[str, int]] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "type": "snapshot",
            "step": self.step,
            "regions": {str(k): dict(sorted(v.items())) for k, v in sorted(self.regions.items())},
        }
        if self.structure is not None:
            rec["structure"] = self.structure
        if self.expelled:
            rec["expelled"] = dict(sorted(self.expelled.items()))
        if self.stats:
            rec["stats"] = {str(k): v for k, v in sorted(self.stats.items())}
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Snapshot":
        try:
            return cls(
                step=int(rec["step"]),
                regions={int(k): {s: int(n) for s, n in v.items()} for k, v in rec["regions"].items()},
                structure=rec.get("structure"),
                expelled={s: int(n) for s, n in rec.get("expelled", {}).items()},
                stats={int(k): dict(v) for k, v in rec.get("stats", {}).items()},
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise CorruptTrace(f"bad snapshot record: {exc}") from exc

    def population(self, region: int | None = None) -> int:
        if region is not None:
            return sum(self.regions.get(region, {}).values())
        return sum(sum(v.values()) for v in self.regions.values())


@dataclass
class Trace:
    mode: str
    seed: int | None = None
    header: dict[str, Any] = field(default_factory=dict)
    species: dict[str, str] = field(default_factory=dict)
    snapshots: list[Snapshot] = field(default_factory=list)
    events: list[Any] = field(default_factory=list)
    halted: bool = False
    reason: str | None = None
    # in-memory engine states, not serialized
    configurations: list[Any] = field(default_factory=list, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.snapshots)

    def event_records(self) -> list[dict[str, Any]]:
        return [e if isinstance(e, dict) else e.to_record() for e in self.events]

    def records(self) -> list[dict[str, Any]]:
        head = {"type": "header", "schema": SCHEMA, "mode": self.mode, "seed": self.seed}
        head.update(self.header)
        out = [head]
        out.extend({"type": "species", "id": sid, "molecule": text} for sid, text in self.species.items())
        body = [(s.step, 1, s.to_record()) for s in self.snapshots]
        body.extend((r["step"], 0, r) for r in self.event_records())
        body.sort(key=lambda t: (t[0], t[1]))
        out.extend(r for _, _, r in body)
        if self.reason is not None or self.snapshots:
            out.append({"type": "end", "halted": self.halted, "reason": self.reason})
        return out


def _dumps(rec: dict[str, Any]) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), allow_nan=False)


def trace_to_jsonl(trace: Trace) -> str:
    return "".join(_dumps(r) + "\n" for r in trace.records())


def summary_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "region", "species", "count"])
    for snap in trace.snapshots:
        for region in sorted(snap.regions):
            for sp, n in sorted(snap.regions[region].items()):
                w.writerow([snap.step, region, sp, n])
    return buf.getvalue()


def write_trace(trace: Trace, path: str | Path, format: str = "jsonl") -> None:
    if format == "jsonl":
        text = trace_to_jsonl(trace)
    elif format == "csv-summary":
        text = summary_csv(trace)
    else:
        raise ValueError(f"unknown trace format {format!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def parse_trace(lines) -> Trace:
    """Parse JSONL records from a string or an iterable of lines."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    trace: Trace | None = None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptTrace(f"line {lineno}: {exc.msg}") from exc
        if not isinstance(rec, dict) or "type" not in rec:
            raise CorruptTrace(f"line {lineno}: record without a type")
        kind = rec["type"]
        if trace is None:
            if kind != "header":
                raise CorruptTrace("trace does not start with a header record")
            schema = str(rec.get("schema", ""))
            name, _, version = schema.partition("/")
            if name != "agc-trace" or not version:
                raise CorruptTrace(f"unrecognised schema {schema!r}")
            try:
                major = int(version.split(".")[0])
            except ValueError:
                raise CorruptTrace(f"unrecognised schema {schema!r}") from None
            if major != SCHEMA_MAJOR:
                raise CorruptTrace(f"unsupported trace schema major version {major}")
            extra = {k: v for k, v in rec.items() if k not in ("type", "schema", "mode", "seed")}
            trace = Trace(mode=rec.get("mode", "unknown"), seed=rec.get("seed"), header=extra)
        elif kind == "species":
            trace.species[rec["id"]] = rec["molecule"]
        elif kind == "snapshot":
            trace.snapshots.append(Snapshot.from_record(rec))
        elif kind == "event":
            if "step" not in rec:
                raise CorruptTrace(f"line {lineno}: event without step")
            trace.events.append(rec)
        elif kind == "end":
            trace.halted = bool(rec.get("halted"))
            trace.reason = rec.get("reason")
        else:
            raise CorruptTrace(f"line {lineno}: unknown record type {kind!r}")
    if trace is None:
        raise CorruptTrace("empty trace file")
    return trace


def read_trace(path: str | Path) -> Trace:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_trace(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
