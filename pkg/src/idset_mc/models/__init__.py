"""Built-in models and the preset registry."""

from __future__ import annotations

from .base import GameCellProbs, ModelSpec, TrueSets
from .bivariate_normal import bvn_cdf
from .entry_game import entry_game_model, game_cell_probs, game_m_oracle
from .missing_data import md_gmm_moments, md_identified_sets, md_loglik, md_reduced_form, missing_data_model
from .mixture import worst_case_mixture_cdf
from .moment_inequality import (
    mi_bootstrap_profile_qlr,
    mi_closed_form_posterior_quantile,
    mi_criterion,
    moment_inequality_model,
)
from .uniform_support import qlr_closed_form, uniform_support_loglik, uniform_support_model

_PRESETS = {
    "missing-data-flat": lambda **kw: missing_data_model("flat", "loglik"),
    "missing-data-curved": lambda **kw: missing_data_model("curved", "loglik"),
    "missing-data-cugmm": lambda **kw: missing_data_model("flat", "cugmm"),
    "entry-game": lambda subvector=2, **kw: entry_game_model(int(subvector)),
    "moment-inequality": lambda **kw: moment_inequality_model(False),
    "moment-inequality-recentered": lambda **kw: moment_inequality_model(True),
    "uniform-support": lambda **kw: uniform_support_model(),
}

PRESET_NAMES = tuple(_PRESETS)


def get_model(name: str, **options) -> ModelSpec:
    """Build a preset model by name.

    ``options`` are preset specific; the entry game accepts ``subvector``
    (coordinate index of the scalar of interest, default 2 = Delta1).
    """
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown model preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    return factory(**options)


__all__ = [
    "GameCellProbs",
    "ModelSpec",
    "PRESET_NAMES",
    "TrueSets",
    "bvn_cdf",
    "entry_game_model",
    "game_cell_probs",
    "game_m_oracle",
    "get_model",
    "md_gmm_moments",
    "md_identified_sets",
    "md_loglik",
    "md_reduced_form",
    "mi_bootstrap_profile_qlr",
    "mi_closed_form_posterior_quantile",
    "mi_criterion",
    "missing_data_model",
    "moment_inequality_model",
    "qlr_closed_form",
    "uniform_support_loglik",
    "uniform_support_model",
    "worst_case_mixture_cdf",
]
