"""Study-summary data model, CSV ingestion and reporting-scenario classification."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

# Field name -> CSV column stem.
COLUMN_STEMS = {
    "min": "min",
    "q1": "q1",
    "med": "med",
    "q3": "q3",
    "max": "max",
    "n": "n",
    "mean": "mean",
    "sd": "sd",
    "med_ci_lb": "med.ci.lb",
    "med_ci_ub": "med.ci.ub",
    "alpha_1": "alpha.1",
    "alpha_2": "alpha.2",
    "med_var": "med.var",
}
STEM_TO_FIELD = {v: k for k, v in COLUMN_STEMS.items()}
QUANTILE_FIELDS = ("min", "q1", "med", "q3", "max")

S1, S2, S3 = "S1", "S2", "S3"
MEAN_SD = "MeanSd"
MEDIAN_ONLY = "MedianOnly"
C1_C2 = "C1orC2"
C3 = "C3"
UNUSABLE = "Unusable"
SCENARIOS = (S1, S2, S3, MEAN_SD, MEDIAN_ONLY, C1_C2, C3, UNUSABLE)


class DataError(ValueError):
    """Raised when the input table cannot be turned into a dataset."""


@dataclass(frozen=True)
class GroupSummary:
    min: Optional[float] = None
    q1: Optional[float] = None
    med: Optional[float] = None
    q3: Optional[float] = None
    max: Optional[float] = None
    n: Optional[float] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    med_ci_lb: Optional[float] = None
    med_ci_ub: Optional[float] = None
    alpha_1: Optional[float] = None
    alpha_2: Optional[float] = None
    med_var: Optional[float] = None

    def has(self, *names: str) -> bool:
        return all(getattr(self, name) is not None for name in names)

    def is_empty(self) -> bool:
        return all(getattr(self, f.name) is None for f in fields(self))

    def shifted(self, c: float) -> "GroupSummary":
        """Location-shifted copy (every outcome-unit field moves by ``c``)."""
        updates = {k: getattr(self, k) + c
                   for k in (*QUANTILE_FIELDS, "mean", "med_ci_lb", "med_ci_ub")
                   if getattr(self, k) is not None}
        return replace(self, **updates)

    def scaled(self, c: float) -> "GroupSummary":
        updates = {k: getattr(self, k) * c
                   for k in (*QUANTILE_FIELDS, "mean", "sd", "med_ci_lb", "med_ci_ub")
                   if getattr(self, k) is not None}
        if self.med_var is not None:
            updates["med_var"] = self.med_var * c * c
        return replace(self, **updates)


@dataclass(frozen=True)
class StudySummary:
    study_id: str
    group1: GroupSummary
    group2: GroupSummary = field(default_factory=GroupSummary)
    extra: tuple = ()

    @property
    def two_group(self) -> bool:
        return not self.group2.is_empty()

    def groups(self) -> list[GroupSummary]:
        return [self.group1, self.group2] if self.two_group else [self.group1]

    def swapped(self) -> "StudySummary":
        return replace(self, group1=self.group2, group2=self.group1)


@dataclass(frozen=True)
class Dataset:
    studies: tuple
    two_group: bool
    columns: tuple = ()

    def __post_init__(self):
        if not self.studies:
            raise DataError("zero data rows")

    def __len__(self):
        return len(self.studies)

    def __iter__(self):
        return iter(self.studies)

    @property
    def arity(self) -> str:
        return "two-group" if self.two_group else "one-group"


def classify_group(g: GroupSummary) -> str:
    """Reporting scenario of one group.

    Precedence when several sets are present:
    S3 > S2 > S1 > MeanSd > C3 > C1orC2 > MedianOnly > Unusable.
    """
    if g.has("min", "q1", "med", "q3", "max", "n"):
        return S3
    if g.has("q1", "med", "q3", "n"):
        return S2
    if g.has("min", "med", "max", "n"):
        return S1
    if g.has("mean", "sd", "n"):
        return MEAN_SD
    if g.has("med", "med_var"):
        return C3
    if g.has("med_ci_lb", "med_ci_ub", "alpha_1", "alpha_2"):
        return C1_C2
    if g.med is not None:
        return MEDIAN_ONLY
    return UNUSABLE


def _parse_cell(text: str, row: int, col: str) -> Optional[float]:
    s = text.strip()
    if s == "" or s == "NA":
        return None
    try:
        value = float(s)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: malformed number {text!r}") from None
    if math.isnan(value):
        return None
    return value


def parse_dataset(csv_text: str) -> Dataset:
    """Parse a study table (one row per primary study)."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("missing header row") from None
    seen = set()
    for name in header:
        if name in seen:
            raise DataError(f"duplicate column name {name!r}")
        seen.add(name)

    known = {}
    for idx, name in enumerate(header):
        stem, _, suffix = name.rpartition(".")
        if suffix in ("g1", "g2") and stem in STEM_TO_FIELD:
            known[idx] = (int(suffix[1]), STEM_TO_FIELD[stem])
    author_idx = header.index("author") if "author" in header else None

    studies = []
    for rownum, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {rownum}: expected {len(header)} cells, found {len(row)}")
        values = ({}, {})
        extra = []
        for idx, cell in enumerate(row):
            if idx in known:
                grp, name = known[idx]
                values[grp - 1][name] = _parse_cell(cell, rownum, header[idx])
            elif idx != author_idx:
                extra.append((header[idx], cell))
        sid = row[author_idx].strip() if author_idx is not None else str(rownum)
        studies.append(StudySummary(sid, GroupSummary(**values[0]), GroupSummary(**values[1]),
                                    tuple(extra)))
    if not studies:
        raise DataError("zero data rows")
    arities = {s.two_group for s in studies}
    if len(arities) > 1:
        bad = [s.study_id for s in studies if not s.two_group]
        raise DataError("mixed one-group and two-group studies; group 2 is empty for: "
                        + ", ".join(bad))
    return Dataset(tuple(studies), arities.pop(), tuple(header))


def read_dataset(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_dataset(fh.read())


def _format_value(v: Optional[float]) -> str:
    if v is None:
        return "NA"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def dataset_to_csv(d: Dataset) -> str:
    header = list(d.columns)
    if not header:
        header = ["author"] + [f"{COLUMN_STEMS[f.name]}.g{g}"
                               for g in ((1, 2) if d.two_group else (1,))
                               for f in fields(GroupSummary)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for s in d.studies:
        extra = dict(s.extra)
        row = []
        for name in header:
            stem, _, suffix = name.rpartition(".")
            if name == "author":
                row.append(s.study_id)
            elif suffix in ("g1", "g2") and stem in STEM_TO_FIELD:
                g = s.group1 if suffix == "g1" else s.group2
                row.append(_format_value(getattr(g, STEM_TO_FIELD[stem])))
            else:
                row.append(extra.get(name, ""))
        writer.writerow(row)
    return out.getvalue()


@dataclass(frozen=True)
class Violation:
    study_id: str
    group: int
    message: str


def _group_violations(g: GroupSummary) -> list[str]:
    out = []
    present = [(k, getattr(g, k)) for k in QUANTILE_FIELDS if getattr(g, k) is not None]
    for (ka, va), (kb, vb) in zip(present, present[1:]):
        if va > vb:
            out.append(f"{ka} ≤ {kb} ordering")
    if g.n is not None and (g.n < 1 or g.n != int(g.n)):
        out.append("n must be a positive integer")
    if g.sd is not None and not g.sd > 0:
        out.append("sd > 0")
    if g.med_var is not None and not g.med_var > 0:
        out.append("med_var > 0")
    for name in ("alpha_1", "alpha_2"):
        a = getattr(g, name)
        if a is not None and not 0.0 < a < 0.5:
            out.append(f"{name} in (0, 0.5)")
    if g.med_ci_lb is not None and g.med_ci_ub is not None:
        if g.med_ci_lb > g.med_ci_ub:
            out.append("med_ci_lb ≤ med_ci_ub")
        elif g.med is not None and not g.med_ci_lb <= g.med <= g.med_ci_ub:
            out.append("med_ci_lb ≤ med ≤ med_ci_ub")
    return out


def validate_dataset(d: Dataset) -> list[Violation]:
    """Every invariant breach in the dataset; empty when clean."""
    out = []
    for s in d.studies:
        for gi, g in enumerate(s.groups(), start=1):
            out.extend(Violation(s.study_id, gi, msg) for msg in _group_violations(g))
    return out
