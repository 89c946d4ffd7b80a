from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .mean_methods import MEAN_METHODS, SD_METHODS, check_combination
from .pooling import PoolModel

MEDIAN_METHODS = ("mm", "wm", "qe", "cd")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MethodConfig:
    """Analysis options shared by the mean- and median-based pipelines.

    ``mean_method`` is either one method name or a tuple with one name per
    study (in dataset order).
    """

    mean_method: Union[str, tuple] = "qe"
    se_method: str = "bootstrap"
    sd_method: Optional[str] = None
    median_method: str = "qe"
    model: PoolModel = field(default_factory=PoolModel)
    nboot: int = 1000
    seed: int = 0
    pool: bool = True
    group_labels: tuple = ("Group 1", "Group 2")

    def __post_init__(self):
        methods = (self.mean_method,) if isinstance(self.mean_method, str) else self.mean_method
        try:
            for m in methods:
                check_combination(m, self.se_method)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.sd_method is not None and self.sd_method not in SD_METHODS:
            raise ConfigError(f"unknown sd method {self.sd_method!r}; "
                              f"choose from {', '.join(SD_METHODS)}")
        if self.median_method not in MEDIAN_METHODS:
            raise ConfigError(f"unknown median method {self.median_method!r}")
        if self.nboot < 2:
            raise ConfigError("nboot must be at least 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def mean_method_for(self, index: int) -> str:
        if isinstance(self.mean_method, str):
            return self.mean_method
        return self.mean_method[index]

    def check_study_count(self, k: int) -> None:
        if not isinstance(self.mean_method, str) and len(self.mean_method) != k:
            raise ConfigError(f"per-study mean_method list has {len(self.mean_method)} "
                              f"entries for {k} studies")


__all__ = ["MethodConfig", "ConfigError", "MEDIAN_METHODS", "MEAN_METHODS"]
