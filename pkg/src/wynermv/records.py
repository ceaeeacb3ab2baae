"""Unified run records shared by all solvers, plus plane CSV output.

Records serialize to JSON with sorted keys so reruns are byte-identical;
infinite objective values use the JSON parser's ``Infinity`` extension.
CSV floats are written with 17 significant digits, enough to round-trip
float64 exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .evaluation import PlanePoint
from .model_state import DecoderSet, Encoder

PLANE_COLUMNS = [
    "solver",
    "parameter",
    "trial",
    "z_card",
    "converged",
    "sum_view_mi_bits",
    "joint_mi_bits",
    "residual_cmi_bits",
]


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunRecord:
    """One solver run: config echo, outcome flags, metrics and trajectory."""

    solver: str
    config: dict
    converged: bool
    iterations: int
    metrics: dict
    trajectory: dict
    trajectory_stride: int
    sufficient_decrease: dict | None = None
    encoder: Encoder | None = None
    decoders: DecoderSet | None = None
    diagnostics: dict = field(default_factory=dict)
    trial: int = 0
    grid_index: int = 0

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "config": self.config,
            "converged": self.converged,
            "iterations": self.iterations,
            "metrics": self.metrics,
            "trajectory": self.trajectory,
            "trajectory_stride": self.trajectory_stride,
            "sufficient_decrease": self.sufficient_decrease,
            "encoder": self.encoder.to_dict() if self.encoder else None,
            "decoders": self.decoders.to_dict() if self.decoders else None,
            "diagnostics": self.diagnostics,
            "trial": self.trial,
            "grid_index": self.grid_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            solver=data["solver"],
            config=data["config"],
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
            metrics=data["metrics"],
            trajectory=data["trajectory"],
            trajectory_stride=int(data["trajectory_stride"]),
            sufficient_decrease=data.get("sufficient_decrease"),
            encoder=Encoder.from_dict(data["encoder"]) if data.get("encoder") else None,
            decoders=(
                DecoderSet.from_dict(data["decoders"]) if data.get("decoders") else None
            ),
            diagnostics=data.get("diagnostics", {}),
            trial=int(data.get("trial", 0)),
            grid_index=int(data.get("grid_index", 0)),
        )

    def parameter(self) -> float:
        if "gamma" in self.config:
            return float(self.config["gamma"])
        if "beta" in self.config:
            return float(self.config["beta"])
        return math.nan

    def plane_point(self) -> PlanePoint:
        m = self.metrics
        return PlanePoint(
            sum_view_mi_bits=float(m["sum_view_mi_bits"]),
            joint_mi_bits=float(m["joint_mi_bits"]),
            residual_cmi_bits=float(m["residual_cmi_bits"]),
            solver=self.solver,
            parameter=self.parameter(),
            trial=self.trial,
            z_card=int(self.config.get("z_card", 0)),
            converged=self.converged,
        )


def save_record(record: RunRecord, path) -> None:
    with open(path, "w") as fh:
        json.dump(record.to_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_record(path) -> RunRecord:
    with open(path) as fh:
        return RunRecord.from_dict(json.load(fh))


def render_plane_csv(points: Sequence[PlanePoint]) -> str:
    import io

    buf = io.StringIO(newline="")
    writer = csv.writer(buf)
    writer.writerow(PLANE_COLUMNS)
    for pt in points:
        writer.writerow(
            [
                pt.solver,
                fmt_float(pt.parameter),
                pt.trial,
                pt.z_card,
                str(pt.converged).lower(),
                fmt_float(pt.sum_view_mi_bits),
                fmt_float(pt.joint_mi_bits),
                fmt_float(pt.residual_cmi_bits),
            ]
        )
    return buf.getvalue()


def write_plane_csv(points: Sequence[PlanePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_plane_csv(points))


def read_plane_csv(path) -> list[PlanePoint]:
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            points.append(
                PlanePoint(
                    sum_view_mi_bits=float(row["sum_view_mi_bits"]),
                    joint_mi_bits=float(row["joint_mi_bits"]),
                    residual_cmi_bits=float(row["residual_cmi_bits"]),
                    solver=row["solver"],
                    parameter=float(row["parameter"]),
                    trial=int(row["trial"]),
                    z_card=int(row["z_card"]),
                    converged=row["converged"] == "true",
                )
            )
    return points
