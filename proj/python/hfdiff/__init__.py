"""Estimation and model selection for diffusions sampled at an unknown high frequency."""

import json

import numpy as np

from ._core import HfdiffError, Likelihood, diffusion_keys, drift_keys, simulate
from ._core import _montecarlo_json, _select_json

__all__ = [
    "HfdiffError",
    "Likelihood",
    "diffusion_keys",
    "drift_keys",
    "simulate",
    "fit",
    "select",
    "montecarlo",
]


def fit(values, diffusion, drift, mode="two-step", multistart=8, seed=1, method="nelder-mead",
        alpha_start=None, beta_start=None, gamma=0.05):
    """Fit a builtin model to a path and return the fit report as a dict."""
    lik = Likelihood(np.asarray(values, dtype=float).reshape(len(values), -1), diffusion, drift)
    return json.loads(lik._fit_json(mode, multistart, seed, method, alpha_start, beta_start, gamma))


def select(values, diffusion=None, drift=None, strategy="joint", criterion="mBIC", multistart=8, seed=1,
           alpha_start=(-1.0, 1.0), beta_start=(-2.0, 0.0)):
    """Model selection over builtin candidates; weights are indexed [drift][diffusion]."""
    values = np.asarray(values, dtype=float).reshape(len(values), -1)
    return json.loads(_select_json(values, list(diffusion or diffusion_keys()), list(drift or drift_keys()),
                                   strategy, criterion, multistart, seed, alpha_start, beta_start))


def montecarlo(config):
    """Run a Monte Carlo experiment from a config dict."""
    return json.loads(_montecarlo_json(json.dumps(config)))
