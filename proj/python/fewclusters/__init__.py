"""Placebo (randomization) inference with few treated and untreated clusters."""

import json as _json

from ._core import (
    ClusterDataset,
    FewClustersError,
    adjusted_statistic,
    bch_t_test,
    circular_ma,
    cli,
    comparison_of_means,
    crs_sign_test,
    enumerate_assignments,
    estimate,
    gen_linear,
    gen_probit,
    im_t_test,
    placebo_test,
    pooled_ols_crve,
    set_threads,
    two_sample_variance,
    wild_cluster_bootstrap_test,
)

__all__ = [
    "ClusterDataset",
    "FewClustersError",
    "adjusted_statistic",
    "bch_t_test",
    "circular_ma",
    "cli",
    "comparison_of_means",
    "crs_sign_test",
    "enumerate_assignments",
    "estimate",
    "gen_linear",
    "gen_probit",
    "im_t_test",
    "placebo_test",
    "pooled_ols_crve",
    "run_experiment",
    "set_threads",
    "two_sample_variance",
    "wild_cluster_bootstrap_test",
]


def run_experiment(config):
    """Run a Monte Carlo experiment.

    ``config`` is a dict with the same layout as the JSON files accepted by
    ``fewclusters simulate``. Returns ``(rows, csv_text)``.
    """
    from ._core import run_experiment_json

    return run_experiment_json(_json.dumps(config))
