"""Monte Carlo confidence sets for identified sets in partially identified models."""

__version__ = "0.1.0"

from .criterion import Criterion, CriterionKind, DataSet, QlrContext, maximize_criterion, qlr  # noqa: E402
from .models import PRESET_NAMES, get_model  # noqa: E402
from .params import ParamSpace, Prior, SubvectorMap  # noqa: E402
from .procedures import percentile_cs, procedure1, procedure2, procedure3, projection_cs  # noqa: E402
from .smc import ParticleCloud, SmcConfig, run_smc  # noqa: E402

__all__ = [
    "Criterion",
    "CriterionKind",
    "DataSet",
    "PRESET_NAMES",
    "ParamSpace",
    "ParticleCloud",
    "Prior",
    "QlrContext",
    "SmcConfig",
    "SubvectorMap",
    "get_model",
    "maximize_criterion",
    "percentile_cs",
    "procedure1",
    "procedure2",
    "procedure3",
    "projection_cs",
    "qlr",
    "run_smc",
]
