"""Meta-analysis of studies that report medians and other quantile summaries."""

from .analysis import Analysis, AnalysisError, run_metamean, run_metamedian
from .config import ConfigError, MethodConfig
from .data import (Dataset, DataError, GroupSummary, StudySummary, classify_group,
                   parse_dataset, read_dataset, validate_dataset)
from .describe import bowley, describe_studies
from .mean_methods import estimate_mean, estimate_sd, estimate_se_mean, study_effect_mean
from .median_methods import cd_pool, cd_within_study, pool_order_stat, qe_median_se, \
    study_effect_median
from .pooling import EffectEstimate, PooledResult, PoolModel, pool_iv

__version__ = "0.1.0"
