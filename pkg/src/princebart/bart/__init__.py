"""Probit Bayesian additive regression trees."""

from .forest import (
    BartFitState,
    BartSampler,
    Forest,
    Node,
    RankCoder,
    SplitRule,
    Tree,
    bart_iteration,
    draw_latents,
    fit_propensity,
    leaf_posterior,
    leaf_value_draw,
    predict_probability,
    sample_prior_tree,
    split_probability,
)
