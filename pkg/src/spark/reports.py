"""Accuracy/forgetting reports and their CSV serialization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .continual import PhaseReport
from .errors import InvalidInputError


@dataclass
class MetricsReport:
    per_generator: dict[str, float] = field(default_factory=dict)
    per_k: dict[int, dict[str, float]] = field(default_factory=dict)
    loss_curve: list[float] = field(default_factory=list)
    parameter_count: int = 0

    @property
    def macc(self) -> float:
        if not self.per_generator:
            return float("nan")
        return float(np.mean(list(self.per_generator.values())))

    def macc_at(self, k: int) -> float:
        return float(np.mean(list(self.per_k[k].values())))


def write_metrics_csv(report: MetricsReport, path) -> None:
    """One row per generator; one accuracy column per k (or a single
    'accuracy' column when no k-sweep was run); mAcc summary row."""
    ks = sorted(report.per_k)
    gens = sorted(report.per_generator)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        if ks:
            w.writerow(["generator"] + [f"acc@k{k}" for k in ks])
            for g in gens:
                w.writerow([g] + [f"{report.per_k[k][g]:.6f}" for k in ks])
            w.writerow(["mAcc"] + [f"{report.macc_at(k):.6f}" for k in ks])
        else:
            w.writerow(["generator", "accuracy"])
            for g in gens:
                w.writerow([g, f"{report.per_generator[g]:.6f}"])
            w.writerow(["mAcc", f"{report.macc:.6f}"])


def forgetting_row(reports: list[PhaseReport], intro_phase: dict[str, int]) -> list[float]:
    """Per phase p: mean drop, over eval sets introduced at q < p, from the
    end-of-phase-q accuracy to the end-of-phase-p accuracy. 0.0 at phase 0."""
    out = []
    for p, rep in enumerate(reports):
        drops = []
        for name, q in intro_phase.items():
            if q < p and name in rep.accuracy:
                drops.append(reports[q].accuracy[name] - rep.accuracy[name])
        out.append(float(np.mean(drops)) if drops else 0.0)
    return out


def write_phase_csv(reports: list[PhaseReport], intro_phase: dict[str, int], path) -> None:
    """Matrix: eval-set rows x phase columns, plus mAcc and forgetting rows."""
    if not reports:
        raise InvalidInputError("no phase reports to write")
    names = sorted(reports[0].accuracy)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["eval_set"] + [f"phase{r.phase}" for r in reports])
        for name in names:
            w.writerow([name] + [f"{r.accuracy[name]:.6f}" for r in reports])
        w.writerow(["mAcc"] + [f"{r.mean_accuracy:.6f}" for r in reports])
        w.writerow(["forgetting"] + [f"{v:.6f}"
                                     for v in forgetting_row(reports, intro_phase)])
