"""Reusable numerical tools: significance tests, densities, forests, AUC."""

from tools.auc import roc_auc
from tools.density import DensityModel, KdeSearchSpec, Kernel, kde_fit, kde_select
from tools.forest import ForestModel, ForestParams, fit_forest, random_search
from tools.seeding import task_seed
from tools.stats_tests import fisher_exact_two_sided, ks_two_sample, select_features

__all__ = [
    "DensityModel",
    "ForestModel",
    "ForestParams",
    "KdeSearchSpec",
    "Kernel",
    "fisher_exact_two_sided",
    "fit_forest",
    "kde_fit",
    "kde_select",
    "ks_two_sample",
    "random_search",
    "roc_auc",
    "select_features",
    "task_seed",
]
