"""End-to-end pipelines: per-study effects, exclusions, then pooling."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .config import ConfigError, MethodConfig
from .data import Dataset
from .kernel import RngStream
from .mean_methods import study_effect_mean
from .median_methods import cd_pool, pool_order_stat, study_effect_median
from .pooling import EffectEstimate, PooledResult, PoolingError, pool_iv

MEAN_LABELS = {
    "wan": "Wan et al.", "luo": "Luo et al.", "shi_normal": "Shi et al. (normal)",
    "shi_lognormal": "Shi et al. (log-normal)", "qe": "QE (mean)", "bc": "BC", "mln": "MLN",
    "yang": "Yang et al.",
}
MEDIAN_LABELS = {"mm": "MM", "wm": "WM", "qe": "QE (median)", "cd": "CD"}


class AnalysisError(ValueError):
    pass


@dataclass
class Analysis:
    kind: str                       # "mean" or "median"
    effects: list
    result: Optional[PooledResult] = None
    warnings: list = field(default_factory=list)


def thread_count() -> int:
    cap = os.environ.get("MEDIPOOL_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"MEDIPOOL_THREADS must be an integer, got {cap!r}") from None
    return n


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _collect(d: Dataset, one, threads: int):
    """Run ``one(index, study)`` per study; failures become exclusion notes."""
    def safe(item):
        i, s = item
        try:
            return one(i, s), None
        except ValueError as exc:
            return None, f"study {s.study_id} excluded: {exc}"
    out = _map(safe, list(enumerate(d.studies)), threads)
    effects = [e for e, _ in out if e is not None]
    notes = [msg for _, msg in out if msg is not None]
    return effects, notes


def pool_effects(effects: list, cfg: MethodConfig, kind: str) -> PooledResult:
    if kind == "mean":
        method = cfg.mean_method if isinstance(cfg.mean_method, str) else "mixed"
        return pool_iv(effects, cfg.model, MEAN_LABELS.get(method, method))
    m = cfg.median_method
    if m in ("mm", "wm"):
        return pool_order_stat(effects, weighted=m == "wm", level=cfg.model.level)
    if m == "cd":
        return cd_pool(effects, cfg.model)
    return pool_iv(effects, cfg.model, MEDIAN_LABELS[m])


def _finish(kind, d, effects, notes, cfg) -> Analysis:
    if not effects:
        raise AnalysisError("no study could be analyzed:\n  " + "\n  ".join(notes))
    a = Analysis(kind, effects, warnings=list(notes))
    if cfg.pool:
        try:
            a.result = pool_effects(effects, cfg, kind)
        except PoolingError as exc:
            raise AnalysisError(str(exc)) from None
        a.warnings.extend(a.result.warnings)
    return a


def run_metamean(d: Dataset, cfg: MethodConfig, threads: int = 1) -> Analysis:
    cfg.check_study_count(len(d))
    root = RngStream(cfg.seed)
    effects, notes = _collect(d, lambda i, s: study_effect_mean(s, cfg, root, i), threads)
    return _finish("mean", d, effects, notes, cfg)


def run_metamedian(d: Dataset, cfg: MethodConfig, threads: int = 1) -> Analysis:
    if cfg.median_method == "cd" and d.two_group:
        raise ConfigError("the cd median method applies to one-group data only; "
                          "use mm, wm or qe for two-group studies")
    effects, notes = _collect(d, lambda i, s: study_effect_median(s, cfg), threads)
    return _finish("median", d, effects, notes, cfg)


def effects_from_rows(rows) -> list:
    """Effect estimates from mappings with keys id, y, se, n_total, scenario, method."""
    out = []
    for row in rows:
        def num(key):
            v = row.get(key)
            if v is None or v == "" or v == "NA":
                return None
            return float(v)
        if num("y") is None:
            raise AnalysisError(f"effect row {row.get('id')!r} has no y value")
        out.append(EffectEstimate(str(row.get("id", "")), num("y"), num("se"), num("n_total"),
                                  row.get("scenario") or "", row.get("method") or ""))
    return out
