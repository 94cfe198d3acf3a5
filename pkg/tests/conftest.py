"""Shared fixtures: cached solver pipelines so expensive assemblies are built
once per session."""

import numpy as np
import pytest

from divhdg import (
    ProblemParams,
    assemble_saddle,
    build_spaces,
    eliminate_local,
    interpolate_essential,
    step_domain,
    unit_square,
)

_CACHE = {}


def pipeline(problem, n, k, mu=1.0, tau=0.0, inv_lambda=0.0, alpha=8.0):
    """(mesh, spaces, essential, block, condensed) for one configuration,
    cached for the whole test session."""
    key = (problem, n, k, mu, tau, inv_lambda, alpha)
    if key not in _CACHE:
        mesh = step_domain(n) if problem == "step" else unit_square(n)
        spaces = build_spaces(mesh, k)
        ess = interpolate_essential(mesh, spaces, problem)
        params = ProblemParams(mu=mu, tau=tau, inv_lambda=inv_lambda, alpha=alpha)
        block = assemble_saddle(mesh, spaces, params, ess)
        cond = eliminate_local(block)
        _CACHE[key] = (mesh, spaces, ess, block, cond)
    return _CACHE[key]


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260822)


@pytest.fixture(scope="session")
def cavity22():
    """unit_square(2), k=2, tau=1, 1/lambda=1: fully nonsingular reference."""
    return pipeline("cavity", 2, 2, tau=1.0, inv_lambda=1.0)


@pytest.fixture(scope="session")
def cavity22_stokes():
    """unit_square(2), k=2, tau=1, 1/lambda=0: enclosed incompressible."""
    return pipeline("cavity", 2, 2, tau=1.0, inv_lambda=0.0)
