"""Shared fixtures: the expensive pipeline/Monte-Carlo runs are session-scoped
so the acceptance tests and the unit tests reuse one set of results."""

import time

import numpy as np
import pytest

from quadtrap.fixtures import build_fixture
from quadtrap.model import make_system
from quadtrap.pipeline import PipelineConfig, run_pipeline
from quadtrap.sim import SimOptions, empirical_ultimate_bound


def random_lossless_system(seed=42, n=6):
    """Random n-state system with a lossless quadratic part and Hurwitz A.

    The quadratic tensor is built from a generator C antisymmetric in its
    first two indices; Q[i,j,k] = C[i,j,k] + C[i,k,j] is then symmetric in
    (j,k) while the contraction y_i y_j y_k annihilates the antisymmetric
    part, so y^T Q(y) = 0 identically.
    """
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((n, n, n))
    C = C - np.transpose(C, (1, 0, 2))
    Q = C + np.transpose(C, (0, 2, 1))
    A = rng.standard_normal((n, n))
    A = A - 1.5 * np.linalg.norm(A) * np.eye(n)
    d = rng.standard_normal(n)
    return make_system(A, Q, d)


@pytest.fixture(scope="session")
def academic_run():
    """Academic fixture pipeline with the shift pinned at the origin."""
    system = build_fixture("academic2d")
    t0 = time.perf_counter()
    report = run_pipeline(system, PipelineConfig(delta_m=10.0), fixed_shift=[0.0, 0.0])
    elapsed = time.perf_counter() - t0
    assert report.status == "certified"
    return system, report, elapsed


@pytest.fixture(scope="session")
def mls_run():
    system = build_fixture("mls")
    t0 = time.perf_counter()
    report = run_pipeline(system, PipelineConfig(delta_m=30.0))
    elapsed = time.perf_counter() - t0
    assert report.status == "certified"
    return system, report, elapsed


@pytest.fixture(scope="session")
def lorenz_run():
    system = build_fixture("lorenz")
    report = run_pipeline(system, PipelineConfig(delta_m=50.0))
    assert report.status == "certified"
    return system, report


@pytest.fixture(scope="session")
def six_state_run():
    system = random_lossless_system()
    report = run_pipeline(system, PipelineConfig(delta_m=10.0))
    return system, report


@pytest.fixture(scope="session")
def mls_mc(mls_run):
    """1000-trial Monte-Carlo study against the final MLS certificate."""
    system, report, _ = mls_run
    options = SimOptions(trials=1000, init_half_width=100.0, rng_seed=0)
    result = empirical_ultimate_bound(system, options, certificate=report.final)
    return result
