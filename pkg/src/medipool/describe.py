"""Descriptive pre-analysis report: scenario counts and Bowley skewness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import C1_C2, C3, S1, S2, S3, Dataset, classify_group
from .median_methods import C4, C5, cd_scenario

BOWLEY_KEYS = ("min", "q1", "median", "mean", "q3", "max")


def bowley(q1: float, med: float, q3: float) -> float:
    if not q3 > q1:
        raise ValueError("Bowley skewness needs q1 < q3")
    return (q3 + q1 - 2.0 * med) / (q3 - q1)


@dataclass
class GroupDescription:
    n_studies: int = 0
    n_median: int = 0
    n_s1: int = 0
    n_s2: int = 0
    n_s3: int = 0
    n_mean: int = 0
    n_mean_sd_n: int = 0
    cd_scenario_counts: Optional[dict] = None
    bowley_values: list = field(default_factory=list)
    bowley: Optional[dict] = None

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("n_studies", "n_median", "n_s1", "n_s2", "n_s3",
                                             "n_mean", "n_mean_sd_n")}
        if self.cd_scenario_counts is not None:
            out["cd_scenario_counts"] = dict(self.cd_scenario_counts)
        out["bowley"] = self.bowley
        return out


@dataclass
class DescriptionReport:
    groups: list
    method: str = "default"
    diagnostics: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"method": self.method,
                "groups": [g.as_dict() for g in self.groups],
                "diagnostics": list(self.diagnostics)}


def five_number_summary(values) -> dict:
    """Min, type-7 quartiles, median, mean and max of ``values``."""
    x = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    return {"min": float(x[0]), "q1": float(q1), "median": float(med),
            "mean": math.fsum(x) / len(x), "q3": float(q3), "max": float(x[-1])}


def describe_studies(d: Dataset, method: str = "default") -> DescriptionReport:
    if method not in ("default", "cd"):
        raise ValueError("method must be 'default' or 'cd'")
    groups = [GroupDescription() for _ in range(2 if d.two_group else 1)]
    diagnostics = []
    for s in d.studies:
        for gi, g in enumerate(s.groups()):
            out = groups[gi]
            out.n_studies += 1
            sc = classify_group(g)
            if g.med is not None:
                out.n_median += 1
            out.n_s1 += sc == S1
            out.n_s2 += sc == S2
            out.n_s3 += sc == S3
            if g.mean is not None:
                out.n_mean += 1
                out.n_mean_sd_n += g.has("sd", "n")
            if method == "cd":
                counts = out.cd_scenario_counts
                if counts is None:
                    counts = out.cd_scenario_counts = {k: 0 for k in (C1_C2, C3, C4, C5)}
                tag = cd_scenario(g)
                if tag is not None:
                    counts[tag] += 1
            if sc in (S2, S3):
                try:
                    out.bowley_values.append(bowley(g.q1, g.med, g.q3))
                except ValueError:
                    diagnostics.append(f"study {s.study_id}, group {gi + 1}: q1 = q3, "
                                       "excluded from the Bowley summary")
    for out in groups:
        if out.bowley_values:
            out.bowley = five_number_summary(out.bowley_values)
    return DescriptionReport(groups, method, diagnostics)


_DEFAULT_ROWS = (
    ("N. studies:", "n_studies"),
    ("N. studies reporting the median:", "n_median"),
    ("  N. studies reporting S1 (min, med, max, n):", "n_s1"),
    ("  N. studies reporting S2 (q1, med, q3, n):", "n_s2"),
    ("  N. studies reporting S3 (min, q1, med, q3, max, n):", "n_s3"),
    ("N. studies reporting the mean:", "n_mean"),
    ("  N. studies reporting the mean, sd, and n:", "n_mean_sd_n"),
)
_CD_ROWS = (
    ("  N. studies reporting C1/C2 (bounds of a CI for the median):", C1_C2),
    ("  N. studies reporting C3 (median and its variance):", C3),
    ("  N. studies reporting C4 (mean, sd, n):", C4),
    ("  N. studies reporting C5 (median, q1, q3, n):", C5),
)
_BOWLEY_ROWS = (
    ("  Minimum:", "min"),
    ("  First quartile:", "q1"),
    ("  Median:", "median"),
    ("  Mean:", "mean"),
    ("  Third quartile:", "q3"),
    ("  Maximum:", "max"),
)
LABEL_WIDTH = 54


def render_text(report: DescriptionReport, group_labels=("Group 1", "Group 2")) -> str:
    """Plain-text table with one right-aligned column per group."""
    k = len(report.groups)
    headers = list(group_labels[:k]) if k > 1 else [""]
    rows = []
    if report.method == "cd":
        rows.append(("N. studies:", [str(g.n_studies) for g in report.groups]))
        rows.append(("N. studies reporting a CD summary set:",
                     [str(sum(g.cd_scenario_counts.values())) for g in report.groups]))
        for label, tag in _CD_ROWS:
            rows.append((label, [str(g.cd_scenario_counts[tag]) for g in report.groups]))
    else:
        for label, key in _DEFAULT_ROWS:
            rows.append((label, [str(getattr(g, key)) for g in report.groups]))
    if any(g.bowley is not None for g in report.groups):
        rows.append(("Bowley skewness", [""] * k))
        for label, key in _BOWLEY_ROWS:
            rows.append((label, [f"{g.bowley[key]:.4f}" if g.bowley else "NA"
                                 for g in report.groups]))
    label_w = max(LABEL_WIDTH, max(len(r[0]) for r in rows) + 1)
    widths = [max(len(headers[j]), 7, *(len(r[1][j]) for r in rows)) for j in range(k)]

    def line(label, cells):
        return (label.ljust(label_w)
                + " ".join(c.rjust(w) for c, w in zip(cells, widths))).rstrip()

    out = ["DESCRIPTION OF PRIMARY STUDIES", line("", headers)]
    out.extend(line(label, cells) for label, cells in rows)
    return "\n".join(out) + "\n"
