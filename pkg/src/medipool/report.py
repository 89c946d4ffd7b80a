"""Text, JSON and CSV renderings of analyses."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Optional

from .analysis import Analysis
from .pooling import PooledResult

SIGNIF_LINE = "Signif. codes:  0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1"


def fmt(x: Optional[float], digits: int = 4) -> str:
    if x is None:
        return "NA"
    return f"{x:.{digits}f}"


def fmt_p(p: Optional[float]) -> str:
    if p is None:
        return "NA"
    return "<.0001" if p < 1e-4 else f"{p:.4f}"


def signif_stars(p: Optional[float]) -> str:
    if p is None:
        return ""
    for cut, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, ".")):
        if p < cut:
            return mark
    return ""


def _table(headers, rows) -> list[str]:
    widths = [max(len(h), *(len(r[j]) for r in rows)) for j, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    return lines


def percent_weights(r: PooledResult) -> list[float]:
    total = math.fsum(r.weights)
    return [100.0 * w / total for w in r.weights]


def _title(r: PooledResult) -> str:
    if r.method_label in ("mm", "wm"):
        name = "Weighted Median of Medians" if r.method_label == "wm" else "Median of Medians"
        return f"{name} (k = {r.k}; order-statistic confidence interval)"
    if r.method_label == "cd":
        est = f"; tau^2 estimator: {r.tau2_method}" if r.tau2_method else ""
        kind = "Random-Effects" if r.model == "random" else "Common-Effect"
        return f"Confidence Distribution Method, {kind} Weights (k = {r.k}{est}; jackknife variance)"
    if r.model == "random":
        return f"Random-Effects Model (k = {r.k}; tau^2 estimator: {r.tau2_method})"
    return f"Common-Effect Model (k = {r.k})"


def render_pooled_text(r: PooledResult) -> str:
    out = [_title(r), ""]
    order = r.method_label in ("mm", "wm")
    if r.tau2 is not None:
        se = f" (SE = {fmt(r.tau2_se)})" if r.tau2_se is not None and r.method_label != "cd" else ""
        out.append(f"tau^2 (estimated amount of total heterogeneity): {fmt(r.tau2)}{se}")
        out.append(f"tau (square root of estimated tau^2 value):      {fmt(math.sqrt(r.tau2))}")
    if r.i2 is not None:
        out.append(f"I^2 (total heterogeneity / total variability):   {r.i2:.2f}%")
        out.append(f"H^2 (total variability / sampling variability):  {r.h2:.2f}")
    if r.q is not None:
        p = fmt_p(r.q_pval)
        p = f"p-val {p}" if p.startswith("<") else f"p-val = {p}"
        out += ["", "Test for Heterogeneity:", f"Q(df = {r.q_df}) = {fmt(r.q)}, {p}"]
    if out[-1] != "":
        out.append("")
    out += ["Model Results:", ""]
    if order:
        headers = ["estimate", "ci.lb", "ci.ub", "coverage"]
        rows = [[fmt(r.estimate), fmt(r.ci_lb), fmt(r.ci_ub), fmt(r.achieved_coverage)]]
        out += [" " + line for line in _table(headers, rows)]
    else:
        stat = "tval" if r.method_label == "cd" else "zval"
        headers = ["estimate", "se", stat, "pval", "ci.lb", "ci.ub", "   "]
        rows = [[fmt(r.estimate), fmt(r.se), fmt(r.zval), fmt_p(r.pval), fmt(r.ci_lb),
                 fmt(r.ci_ub), signif_stars(r.pval).ljust(3)]]
        out += [" " + line for line in _table(headers, rows)]
        out += ["", "---", SIGNIF_LINE]
    return "\n".join(out) + "\n"


def render_effects_text(a: Analysis) -> str:
    headers = ["study", "y", "se", "n_total", "scenario", "method"]
    rows = [[e.study_id, fmt(e.y), fmt(e.se), fmt(e.n_total, 0), e.scenario, e.method]
            for e in a.effects]
    widths = [max(len(h), *(len(r[j]) for r in rows)) for j, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) if j == 0 else h.rjust(w)
                       for j, (h, w) in enumerate(zip(headers, widths))).rstrip()]
    for r in rows:
        lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                               for j, (c, w) in enumerate(zip(r, widths))).rstrip())
    return "\n".join(lines) + "\n"


def render_text(a: Analysis) -> str:
    return render_pooled_text(a.result) if a.result is not None else render_effects_text(a)


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def analysis_dict(a: Analysis) -> dict:
    r = a.result
    weights = percent_weights(r) if r is not None else [None] * len(a.effects)
    studies = [{"id": e.study_id, "y": e.y, "se": e.se, "weight": w, "scenario": e.scenario,
                "method": e.method, "n_total": e.n_total}
               for e, w in zip(a.effects, weights)]
    if r is None:
        return {"model": None, "k": len(a.effects), "studies": studies,
                "warnings": list(a.warnings)}
    out = {
        "model": r.model, "method": r.method_label, "k": r.k, "level": r.level,
        "estimate": r.estimate, "se": r.se, "ci": [r.ci_lb, r.ci_ub],
        "zval": r.zval, "pval": r.pval,
        "tau2_method": r.tau2_method, "tau2": r.tau2, "tau2_se": r.tau2_se,
        "tau2_ci": list(r.tau2_ci) if r.tau2_ci is not None else None,
        "i2": r.i2, "i2_ci": list(r.i2_ci) if r.i2_ci is not None else None,
        "h2": r.h2, "q": r.q, "q_df": r.q_df, "q_pval": r.q_pval,
        "achieved_coverage": r.achieved_coverage,
        "studies": studies, "warnings": list(a.warnings),
    }
    return {k: _clean(v) for k, v in out.items()}


def render_json(a: Analysis) -> str:
    return json.dumps(analysis_dict(a), indent=2, allow_nan=False) + "\n"


EFFECT_COLUMNS = ("id", "y", "se", "n_total", "weight", "scenario", "method")


def render_csv(a: Analysis) -> str:
    """Per-study rows in full precision, readable back by the ``pool`` command."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EFFECT_COLUMNS)
    for s in analysis_dict(a)["studies"]:
        w.writerow(["NA" if s[c] is None else (repr(s[c]) if isinstance(s[c], float) else s[c])
                    for c in EFFECT_COLUMNS])
    return buf.getvalue()


def describe_json(report) -> str:
    return json.dumps(report.as_dict(), indent=2) + "\n"
