import json

import numpy as np
import pytest

from quadtrap import lossless
from quadtrap.certify import trapping_lmi_matrix, verify
from quadtrap.fixtures import build_fixture
from quadtrap.model import make_system, shift
from quadtrap.pipeline import (
    EllipsoidCertificate,
    MethodInapplicableError,
    PipelineConfig,
    PipelineError,
    containment_check,
    ellipsoid_sdp,
    gevp_refine,
    goyal_ball_radius,
    grid_search,
    load_certificate,
    local_shift_search,
    optimize_shift,
    run_pipeline,
    save_certificate,
    sweep_to_csv,
)


@pytest.fixture(scope="module")
def academic():
    system = build_fixture("academic2d")
    structure = lossless.build_structure(system)
    return system, structure, PipelineConfig()


@pytest.fixture(scope="module")
def academic_chain(academic):
    system, structure, config = academic
    grid_cert, sweep = grid_search(system, structure, np.zeros(2), config)
    gevp_cert = gevp_refine(grid_cert, system, config, structure=structure)
    local_cert = local_shift_search(gevp_cert, system, structure, config)
    return grid_cert, sweep, gevp_cert, local_cert


def test_grid_search_known_level(academic, academic_chain):
    system, _, _ = academic
    grid_cert, sweep, _, _ = academic_chain
    assert grid_cert.alpha == pytest.approx(0.2905, abs=1e-3)
    assert grid_cert.stage == "grid"
    assert verify(system, grid_cert).passed
    feasible_points = [p for p in sweep if p.feasible]
    assert feasible_points
    best = min(feasible_points, key=lambda p: p.alpha)
    assert grid_cert.alpha == pytest.approx(best.alpha, rel=1e-12)


def test_feasible_chi_band_contiguous(academic_chain):
    _, sweep, _, _ = academic_chain
    flags = [p.feasible for p in sweep]
    first = flags.index(True)
    last = len(flags) - 1 - flags[::-1].index(True)
    assert all(flags[first : last + 1])
    assert not any(flags[:first])
    assert not any(flags[last + 1 :])


def test_infeasible_sweep_points_carry_no_radius(academic_chain):
    _, sweep, _, _ = academic_chain
    for p in sweep:
        if not p.feasible:
            assert np.isnan(p.r) and np.isnan(p.alpha)
        else:
            assert p.r > 0 and p.alpha > 0


def test_gevp_refine_tightens(academic, academic_chain):
    system, _, _ = academic
    grid_cert, _, gevp_cert, _ = academic_chain
    assert gevp_cert.alpha <= grid_cert.alpha + 1e-9
    assert gevp_cert.alpha == pytest.approx(0.2887, abs=1e-3)
    assert gevp_cert.chi == pytest.approx(2.0, abs=1e-2)
    assert verify(system, gevp_cert).passed


def test_gevp_refine_idempotent(academic, academic_chain):
    system, structure, config = academic
    _, _, gevp_cert, _ = academic_chain
    again = gevp_refine(gevp_cert, system, config, structure=structure)
    assert again.alpha == pytest.approx(gevp_cert.alpha, rel=1e-6)
    assert again.alpha <= gevp_cert.alpha + 1e-9


def test_local_search_finds_equilibrium(academic, academic_chain):
    system, _, _ = academic
    _, _, _, local_cert = academic_chain
    assert local_cert.stage == "local-search"
    np.testing.assert_allclose(local_cert.m, [0.0, 0.25], atol=1e-3)
    assert local_cert.alpha <= 1e-2
    assert verify(system, local_cert).passed


def test_local_search_stationary_at_its_output(academic, academic_chain):
    system, structure, config = academic
    _, _, _, local_cert = academic_chain
    again = local_shift_search(local_cert, system, structure, config)
    assert np.linalg.norm(again.m - local_cert.m) < 1e-3
    assert again.alpha <= local_cert.alpha + 1e-9


def test_stage_levels_never_increase(academic_chain):
    grid_cert, _, gevp_cert, local_cert = academic_chain
    assert gevp_cert.alpha <= grid_cert.alpha + 1e-9
    assert local_cert.alpha <= gevp_cert.alpha + 1e-9


def test_selected_final_nested_in_incumbent(academic_chain, mls_run):
    # the local-search stage may only replace the incumbent with an ellipsoid
    # that provably sits inside it; otherwise the incumbent must come back
    _, _, gevp_cert, local_cert = academic_chain
    assert containment_check(local_cert, gevp_cert)
    _, report, _ = mls_run
    assert containment_check(report.final, report.certificates["gevp"])


def test_ellipsoid_sdp_feasibility(academic):
    system, structure, config = academic
    result = ellipsoid_sdp(system, structure, np.zeros(2), 1.0, config)
    assert result is not None
    P, r = result
    assert np.linalg.eigvalsh(P)[0] >= 1.0 - 1e-6
    sh = shift(system, np.zeros(2))
    theta = trapping_lmi_matrix(sh.L, sh.c, P, r, 1.0)
    assert np.linalg.eigvalsh(theta)[-1] <= 0.0
    assert ellipsoid_sdp(system, structure, np.zeros(2), 1e3, config) is None


def test_containment_nested_and_disjoint():
    small = EllipsoidCertificate.build(np.zeros(2), np.eye(2), 1.0, 1.0, stage="t")
    big = EllipsoidCertificate.build(np.zeros(2), np.eye(2), 2.0, 1.0, stage="t")
    far = EllipsoidCertificate.build(np.array([3.0, 0.0]), np.eye(2), 1.0, 1.0, stage="t")
    squashed = EllipsoidCertificate.build(np.zeros(2), np.diag([1.0, 16.0]), 1.0, 1.0, stage="t")
    assert containment_check(small, big)
    assert not containment_check(big, small)
    assert containment_check(small, small)
    assert not containment_check(small, far)
    assert not containment_check(far, small)
    assert containment_check(squashed, small)  # quarter-height ellipse fits the disk
    assert not containment_check(small, squashed)
    shifted = EllipsoidCertificate.build(np.array([0.9, 0.0]), np.eye(2), 1.0, 1.0, stage="t")
    assert containment_check(shifted, big)
    assert not containment_check(shifted, small)


def test_comparison_ball_known_values(academic):
    system, _, _ = academic
    assert goyal_ball_radius(system, np.eye(2), np.zeros(2)) == pytest.approx(1.0, abs=1e-9)
    lin = make_system(-np.eye(2), np.zeros((2, 2, 2)), np.array([1.0, 0.0]))
    assert goyal_ball_radius(lin, np.eye(2), np.zeros(2)) == pytest.approx(1.0, abs=1e-9)
    lin0 = make_system(-np.eye(2), np.zeros((2, 2, 2)), np.zeros(2))
    assert goyal_ball_radius(lin0, np.eye(2), np.zeros(2)) == 0.0


def test_comparison_ball_scale_invariant_in_weight(academic):
    system, _, _ = academic
    r1 = goyal_ball_radius(system, np.eye(2), np.zeros(2))
    r2 = goyal_ball_radius(system, 5.0 * np.eye(2), np.zeros(2))
    assert r1 == pytest.approx(r2, rel=1e-12)


def test_comparison_ball_needs_decay():
    unstable = make_system(np.eye(2), np.zeros((2, 2, 2)), np.ones(2))
    with pytest.raises(MethodInapplicableError):
        goyal_ball_radius(unstable, np.eye(2), np.zeros(2))


def test_shift_search_linear_oracle():
    # with no quadratic term the alternation is a pure linear-decay SDP:
    # P = I already achieves a = lambda_max(A + A^T) = -2
    system = make_system(np.diag([-1.0, -4.0]), np.zeros((2, 2, 2)), np.zeros(2))
    structure = lossless.build_structure(system)
    config = PipelineConfig(restarts=2)
    solution = optimize_shift(system, structure, config)
    assert solution.certificate_exists
    assert solution.a <= -2.0 + 1e-6
    assert np.trace(solution.P) == pytest.approx(2.0, abs=1e-6)


def test_linear_hurwitz_no_drift_certifies_tiny_region():
    system = make_system(np.diag([-1.0, -4.0]), np.zeros((2, 2, 2)), np.zeros(2))
    report = run_pipeline(system, PipelineConfig(restarts=2))
    assert report.status == "certified"
    assert report.final.alpha <= 1e-3
    assert verify(system, report.final).passed


def test_unstable_linear_reports_no_certificate():
    system = make_system(np.eye(2), np.zeros((2, 2, 2)), np.zeros(2))
    report = run_pipeline(system, PipelineConfig(restarts=2))
    assert report.status == "no-certificate"
    assert report.failed_stage == "shift"
    assert report.final is None
    assert "a =" in report.message


def test_empty_energy_family_reported():
    Q = np.zeros((2, 2, 2))
    Q[0][0, 0] = 1.0
    Q[1][1, 1] = 1.0
    system = make_system(-np.eye(2), Q, np.zeros(2))
    report = run_pipeline(system, PipelineConfig(restarts=2))
    assert report.status == "no-certificate"
    assert report.failed_stage == "shift"
    assert report.structure_dims == {"general": 0, "symmetric": 0}


def test_full_report_with_fixed_shift(academic):
    system, _, _ = academic
    report = run_pipeline(system, fixed_shift=[0.0, 0.0])
    assert report.status == "certified"
    assert report.shift_skipped
    assert report.shift_solution is None
    assert set(report.certificates) == {"grid", "gevp", "local-search"}
    assert report.final is report.certificates["local-search"]
    # the comparison ball is evaluated at the final shift (an equilibrium
    # here, so its offset and radius are both tiny); at the origin it is the
    # unit ball, far looser than any certified stage
    assert report.goyal_radius is not None and report.goyal_radius >= 0.0
    assert goyal_ball_radius(system, report.final.P, np.zeros(2)) == pytest.approx(1.0, abs=1e-9)
    assert report.certificates["gevp"].alpha < 1.0
    assert report.runtime_s > 0
    assert report.structure_dims == {"general": 1, "symmetric": 1}


def test_fixed_shift_wrong_length_rejected(academic):
    system, _, _ = academic
    with pytest.raises(PipelineError):
        run_pipeline(system, fixed_shift=[0.0, 0.0, 0.0])


def test_sweep_csv_format(academic_chain, tmp_path):
    _, sweep, _, _ = academic_chain
    path = tmp_path / "sweep.csv"
    sweep_to_csv(sweep, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "chi,r,alpha,feasible"
    assert len(lines) == len(sweep) + 1
    first = lines[1].split(",")
    assert float(first[0]) == pytest.approx(sweep[0].chi)


def test_certificate_file_round_trip(academic, academic_chain, tmp_path):
    system, _, config = academic
    _, _, gevp_cert, _ = academic_chain
    path = tmp_path / "cert.json"
    save_certificate(gevp_cert, path, config=config, seed=config.rng_seed)
    raw = json.loads(path.read_text())
    assert set(raw) == {
        "m", "P", "r", "chi", "alpha", "ultimate_bound", "stage", "residuals", "config", "seed",
    }
    loaded = load_certificate(path)
    np.testing.assert_allclose(loaded.P, gevp_cert.P)
    assert loaded.alpha == pytest.approx(gevp_cert.alpha, rel=1e-12)
    assert verify(system, loaded).passed


def test_corrupt_certificate_file_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(PipelineError):
        load_certificate(path)
    path.write_text(json.dumps({"m": [0, 0], "P": [[1, 0], [0, 1]]}))
    with pytest.raises(PipelineError):
        load_certificate(path)


def test_pipeline_deterministic_for_fixed_seed(academic):
    system, _, _ = academic
    config = PipelineConfig(restarts=3, rng_seed=11)
    first = run_pipeline(system, config)
    second = run_pipeline(system, config)
    assert first.status == second.status == "certified"
    np.testing.assert_array_equal(first.final.m, second.final.m)
    np.testing.assert_array_equal(first.final.P, second.final.P)
    assert first.final.r == second.final.r
