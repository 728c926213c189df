"""Deterministic evaluation trial schedules and success-rate aggregation.

Three placement protocols are supported; schedules are pure functions of
(protocol, object list, seed). Outcomes are external inputs: this module
never simulates trials, it only schedules them and aggregates 0/1 results.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyObjectList, EmptyOutcomes, IoFailure, SchemaViolation


class Protocol(enum.Enum):
    SIM_MANISKILL = "sim_maniskill"
    FRANKA_REAL = "franka_real"
    H12_HUMANOID = "h12_humanoid"


#: Simulation grid: the exact 4x4 Cartesian product over both axes (meters).
SIM_AXIS_VALUES: tuple[float, ...] = (-0.075, -0.025, 0.025, 0.075)

#: Per-protocol constants: workspace extents (m), trials per object, and the
#: lift threshold (m) carried as metadata for whoever executes the trials.
PROTOCOL_WORKSPACE: dict[Protocol, tuple[float, float]] = {
    Protocol.SIM_MANISKILL: (0.15, 0.15),
    Protocol.FRANKA_REAL: (0.5, 0.28),
    Protocol.H12_HUMANOID: (0.40, 0.36),
}
PROTOCOL_TRIALS: dict[Protocol, int] = {
    Protocol.SIM_MANISKILL: 16,
    Protocol.FRANKA_REAL: 16,
    Protocol.H12_HUMANOID: 5,
}
PROTOCOL_LIFT_THRESHOLD: dict[Protocol, float | None] = {
    Protocol.SIM_MANISKILL: 0.3,
    Protocol.FRANKA_REAL: 0.2,
    Protocol.H12_HUMANOID: None,
}
#: H1-2 square side: 3 inches, in meters.
H12_SQUARE_SIDE = 0.0762
H12_GRID = (3, 2)  # columns across 0.40 m, rows across 0.36 m


@dataclass(frozen=True)
class TrialRecord:
    object_id: str
    x: float
    y: float
    theta: float
    index: int


@dataclass(frozen=True)
class TrialSchedule:
    protocol: Protocol
    seed: int
    trials: tuple[TrialRecord, ...]


def _cell_centers(extent: float, cells: int) -> list[float]:
    """Centers of an even partition of [-extent/2, extent/2] into `cells`."""
    return [(extent / cells) * (k + 0.5) - extent / 2.0 for k in range(cells)]


def _placements_sim() -> list[tuple[float, float]]:
    return [(x, y) for x in SIM_AXIS_VALUES for y in SIM_AXIS_VALUES]


def _placements_franka() -> list[tuple[float, float]]:
    xs = _cell_centers(PROTOCOL_WORKSPACE[Protocol.FRANKA_REAL][0], 4)
    ys = _cell_centers(PROTOCOL_WORKSPACE[Protocol.FRANKA_REAL][1], 4)
    return [(x, y) for x in xs for y in ys]


def h12_cell_centers() -> list[tuple[float, float]]:
    """Six square centers, 3 columns x 2 rows, row-major."""
    wx, wy = PROTOCOL_WORKSPACE[Protocol.H12_HUMANOID]
    xs = _cell_centers(wx, H12_GRID[0])
    ys = _cell_centers(wy, H12_GRID[1])
    return [(x, y) for y in ys for x in xs]


def make_schedule(
    protocol: Protocol, objects: Sequence[str], seed: int
) -> TrialSchedule:
    """Deterministic trial list: fixed grid placements (sim/Franka) or five
    distinct squares per object (H1-2), with z-rotations uniform in [0, 2pi).
    """
    if not objects:
        raise EmptyObjectList("schedule requires at least one object id")
    rng = np.random.default_rng(seed)
    trials: list[TrialRecord] = []
    for object_id in objects:
        if protocol is Protocol.H12_HUMANOID:
            cells = h12_cell_centers()
            chosen = [cells[i] for i in rng.permutation(len(cells))[:5]]
        elif protocol is Protocol.SIM_MANISKILL:
            chosen = _placements_sim()
        else:
            chosen = _placements_franka()
        for index, (x, y) in enumerate(chosen):
            theta = float(rng.uniform(0.0, 2.0 * math.pi))
            trials.append(TrialRecord(object_id, x, y, theta, index))
    return TrialSchedule(protocol=protocol, seed=seed, trials=tuple(trials))


def schedule_json_bytes(schedule: TrialSchedule) -> bytes:
    doc = {
        "protocol": schedule.protocol.value,
        "seed": schedule.seed,
        "workspace_m": list(PROTOCOL_WORKSPACE[schedule.protocol]),
        "lift_threshold_m": PROTOCOL_LIFT_THRESHOLD[schedule.protocol],
        "trials": [
            {"object": t.object_id, "x": t.x, "y": t.y, "theta": t.theta, "index": t.index}
            for t in schedule.trials
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode()


def write_schedule(schedule: TrialSchedule, path: str | Path) -> None:
    try:
        Path(path).write_bytes(schedule_json_bytes(schedule))
    except OSError as exc:
        raise IoFailure(f"cannot write schedule to {path}: {exc}") from exc


def read_schedule(path: str | Path) -> TrialSchedule:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read schedule {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"schedule is not valid JSON: {exc}") from exc
    try:
        return TrialSchedule(
            protocol=Protocol(doc["protocol"]),
            seed=doc["seed"],
            trials=tuple(
                TrialRecord(t["object"], t["x"], t["y"], t["theta"], t["index"])
                for t in doc["trials"]
            ),
        )
    except (KeyError, ValueError) as exc:
        raise SchemaViolation(f"malformed schedule: {exc}") from exc


# ---------------------------------------------------------------------------
# success aggregation
# ---------------------------------------------------------------------------

def _round_half_up(value: float, places: int = 2) -> str:
    quant = Decimal(1).scaleb(-places)
    return str(Decimal(repr(value)).quantize(quant, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class SuccessTable:
    """Per-object 0/1 outcomes with exact rates; display rounds half-up."""

    outcomes: dict[str, tuple[int, ...]]

    def rate(self, object_id: str) -> float:
        trials = self.outcomes[object_id]
        return 100.0 * sum(trials) / len(trials)

    @property
    def overall(self) -> float:
        rates = [self.rate(o) for o in self.outcomes]
        return sum(rates) / len(rates)

    def rate_display(self, object_id: str) -> str:
        return _round_half_up(self.rate(object_id))

    @property
    def overall_display(self) -> str:
        return _round_half_up(self.overall)


def aggregate(outcomes: Mapping[str, Sequence[int]]) -> SuccessTable:
    """Per-object success percentages and their unweighted mean."""
    if not outcomes:
        raise EmptyOutcomes("no objects to aggregate")
    table: dict[str, tuple[int, ...]] = {}
    for object_id, trials in outcomes.items():
        if len(trials) == 0:
            raise EmptyOutcomes(f"object {object_id!r} has no outcomes")
        for value in trials:
            if value not in (0, 1):
                raise ValueError(f"outcome for {object_id!r} is not 0/1: {value!r}")
        table[object_id] = tuple(int(v) for v in trials)
    return SuccessTable(outcomes=table)


def render_success_table(table: SuccessTable) -> str:
    """Aligned plain-text grid, one row per object plus the overall mean."""
    rows = [("object", "trials", "successes", "rate_percent")]
    for object_id, trials in table.outcomes.items():
        rows.append(
            (object_id, str(len(trials)), str(sum(trials)), table.rate_display(object_id))
        )
    rows.append(("overall", "", "", table.overall_display))
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"


def write_success_csv(table: SuccessTable, path: str | Path) -> None:
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["object", "trials", "successes", "rate_percent"])
            for object_id, trials in table.outcomes.items():
                writer.writerow(
                    [object_id, len(trials), sum(trials), table.rate_display(object_id)]
                )
            writer.writerow(["overall", "", "", table.overall_display])
    except OSError as exc:
        raise IoFailure(f"cannot write success table to {path}: {exc}") from exc


def read_outcomes_csv(path: str | Path) -> dict[str, list[int]]:
    """Outcomes file: header `object,trial_index,success`, success in {0, 1}.

    Raises ValueError with the 1-based line number on a non-binary value.
    """
    outcomes: dict[str, list[int]] = {}
    try:
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:3]] != [
                "object",
                "trial_index",
                "success",
            ]:
                raise SchemaViolation(
                    "outcomes file must start with header 'object,trial_index,success'"
                )
            for line_number, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) < 3:
                    raise ValueError(f"line {line_number}: expected 3 columns, got {len(row)}")
                if row[2].strip() not in ("0", "1"):
                    raise ValueError(
                        f"line {line_number}: success must be 0 or 1, got {row[2]!r}"
                    )
                outcomes.setdefault(row[0], []).append(int(row[2]))
    except OSError as exc:
        raise IoFailure(f"cannot read outcomes {path}: {exc}") from exc
    return outcomes


# ---------------------------------------------------------------------------
# scaling-study report
# ---------------------------------------------------------------------------

def scaling_report(
    rows: Sequence[tuple[str, int, float]],
    csv_path: str | Path,
    text_path: str | Path | None = None,
) -> None:
    """Write (label, demos, success) rows as CSV plus an aligned text grid,
    sorted by (label, demos) so output bytes are order-insensitive.
    """
    ordered = sorted(rows, key=lambda r: (r[0], r[1]))
    csv_path = Path(csv_path)
    text_path = Path(text_path) if text_path is not None else csv_path.with_suffix(".txt")
    try:
        with open(csv_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["label", "demos", "success_percent"])
            for label, demos, success in ordered:
                writer.writerow([label, demos, _round_half_up(success)])

        cells = [("label", "demos", "success_percent")]
        cells += [
            (label, str(demos), _round_half_up(success)) for label, demos, success in ordered
        ]
        widths = [max(len(r[c]) for r in cells) for c in range(3)]
        lines = [
            "  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)) for row in cells
        ]
        text_path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write scaling report: {exc}") from exc
