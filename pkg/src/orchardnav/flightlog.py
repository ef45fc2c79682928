"""Flight logs: one JSONL record per policy tick, schema-versioned, with
enough embedded metadata (world params, seeds, spawn, targets) to re-simulate
the flight bit-for-bit.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

LOG_SCHEMA_VERSION = 1


@dataclass
class LogRecord:
    tick: int
    t: float
    position: tuple  # true world position
    attitude: tuple  # true quaternion
    est_altitude: float
    est_yaw_rate: float
    source: str  # "agent" | "expert"
    action: float  # normalized yaw command actually applied
    agent_action: float | None  # what the policy wanted (None while latched)
    collision: bool
    would_intervene: bool = False  # judge flag on evaluation flights


@dataclass
class FlightLog:
    metadata: dict
    records: list[LogRecord] = field(default_factory=list)
    termination: str | None = None

    def append(self, record: LogRecord) -> None:
        if self.records:
            if record.t <= self.records[-1].t:
                raise ValueError("timestamps must be strictly increasing")
            if self.records[-1].collision:
                raise ValueError("collision is terminal")
        self.records.append(record)

    @property
    def sources(self) -> list[str]:
        return [r.source for r in self.records]


def save_flight_log(log: FlightLog, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        header = {"schema_version": LOG_SCHEMA_VERSION,
                  "termination": log.termination, **log.metadata}
        f.write(json.dumps({"header": header}) + "\n")
        for r in log.records:
            f.write(json.dumps(asdict(r)) + "\n")


def load_flight_log(path) -> FlightLog:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])["header"]
    version = header.pop("schema_version", None)
    if version != LOG_SCHEMA_VERSION:
        raise ValueError(f"unsupported flight log schema {version!r}")
    termination = header.pop("termination", None)
    records = []
    for line in lines[1:]:
        doc = json.loads(line)
        doc["position"] = tuple(doc["position"])
        doc["attitude"] = tuple(doc["attitude"])
        records.append(LogRecord(**doc))
    return FlightLog(metadata=header, records=records, termination=termination)


def horizontal_path_length(log: FlightLog, up_to: int | None = None) -> float:
    """Integrated XY path length over the first up_to records."""
    pts = np.array([r.position[:2] for r in log.records[:up_to]])
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*(np.diff(pts, axis=0).T))))
