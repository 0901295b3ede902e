import json
import math

import numpy as np
import pytest

from anderson_lab import experiments
from anderson_lab.eigen import lowest_eigenpairs
from anderson_lab.errors import DegenerateLimit, InfeasibleSpec, InsufficientSamples, NoConvergence, TooLarge
from anderson_lab.experiments import (
    ExperimentConfig,
    clt_diagnostics,
    concentration_profile,
    diagnose_samples,
    eigenfunction_convergence,
    energy_decomposition,
    exact_oracle,
    mean_convergence,
    run_campaign,
)
from anderson_lab.geometry import ShapeSpec, discretize, path_lattice
from anderson_lab.operator import assemble
from anderson_lab.potential import PotentialSpec, ProfileFn
from anderson_lab.reference import homogenized_spectrum

UNIT = ShapeSpec.unit_cube(1)


def _spec(V=1.0, U=0.0, family="two-point", a=-1.0, b=1.0):
    return PotentialSpec(U=ProfileFn.constant(U), V=ProfileFn.constant(V), family=family, a=a, b=b)


def _config(eps=(1 / 16,), indices=(1,), N=200, seed=1, spec=None, shape=UNIT, threads=1, eps_ref=1 / 128):
    return ExperimentConfig(
        shape=shape,
        potential=spec or _spec(),
        eps=list(eps),
        indices=list(indices),
        realizations=N,
        seed=seed,
        eps_ref=eps_ref,
        threads=threads,
    )


@pytest.fixture(scope="module")
def reference():
    return homogenized_spectrum(UNIT, ProfileFn.constant(0.0), 2, 1 / 128)


def test_config_invariants():
    with pytest.raises(ValueError):
        _config(N=1)
    with pytest.raises(ValueError):
        _config(eps=(1 / 16, 1 / 8))
    with pytest.raises(ValueError):
        _config(indices=(1, 1))
    cfg = _config(eps=(1 / 8, 1 / 16), indices=(1, 2))
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    assert "threads" not in cfg.to_dict(runtime=False)


def test_statistics_invariants(reference):
    (st,) = run_campaign(_config(indices=(1, 2), N=300), reference=reference)
    assert st.N == 300 and st.lam.shape == (300, 2)
    assert np.array_equal(st.cov, st.cov.T)
    assert np.all((st.tail_exceedance >= 0) & (st.tail_exceedance <= 1))
    assert np.allclose(st.scaled.mean(axis=0), 0.0, atol=1e-10)
    assert np.all(st.lam[:, 0] < st.lam[:, 1])
    assert np.all(st.identity_residuals <= 1e-10)
    assert st.reference_eigenvalues == pytest.approx([reference.eigenvalues[0], reference.eigenvalues[1]])


def test_deterministic_potential_gives_degenerate_law(reference):
    cfg = _config(eps=(1 / 16, 1 / 32), N=1000, spec=_spec(V=0.0, U=0.5))
    ladder = run_campaign(cfg, reference=homogenized_spectrum(UNIT, ProfileFn.constant(0.5), 1, 1 / 128))
    for st in ladder:
        assert np.all(st.lam == st.lam[0])
        assert np.all(st.cov == 0)
        assert np.all(st.predicted_cov == 0)
    table = energy_decomposition(ladder)
    assert all(r["kinetic_var_scaled"] == 0 and r["g2_var_scaled"] == 0 for r in table["rows"])
    verdict = clt_diagnostics(ladder[0])
    assert verdict["degenerate"] and verdict["passed"]
    assert all(v["status"] == "degenerate" for v in verdict["verdicts"])


def test_paired_seeds_scale_covariance(reference):
    base = run_campaign(_config(eps=(1 / 32,), N=600, spec=_spec(V=0.2)), reference=reference)[0]
    scaled = run_campaign(
        _config(eps=(1 / 32,), N=600, spec=_spec(V=0.2).with_variance_scaled(4.0)), reference=reference
    )[0]
    ratio = scaled.cov[0, 0] / base.cov[0, 0]
    # same seeds means the same signs, so the ratio is far tighter than independent MC error
    assert ratio == pytest.approx(4.0, rel=0.1)
    assert scaled.predicted_cov[0, 0] == pytest.approx(4 * base.predicted_cov[0, 0])


def test_results_do_not_depend_on_worker_count(reference):
    one = run_campaign(_config(N=60, indices=(1, 2)), reference=reference)[0]
    two = run_campaign(_config(N=60, indices=(1, 2), threads=2), reference=reference)[0]
    assert np.array_equal(one.lam, two.lam)
    assert np.array_equal(one.kinetic, two.kinetic)
    assert np.array_equal(one.g2_var_scaled, two.g2_var_scaled)
    assert np.array_equal(one.l1_discrepancy, two.l1_discrepancy)
    assert json.dumps(one.to_dict()) == json.dumps(two.to_dict())


def test_failed_realizations(monkeypatch, reference):
    real = experiments.lowest_eigenpairs
    state = {"calls": 0}

    def flaky(H, k, *args, **kwargs):
        state["calls"] += 1
        if state["calls"] == 5:
            raise NoConvergence("forced", iterations=0, worst_residual=1.0)
        return real(H, k, *args, **kwargs)

    monkeypatch.setattr(experiments, "lowest_eigenpairs", flaky)
    (st,) = run_campaign(_config(N=2000), reference=reference)
    assert st.N == 1999 and len(st.failed) == 1
    assert st.failed[0]["realization"] == 4
    assert 4 not in st.realization_ids

    def broken(H, k, *args, **kwargs):
        raise NoConvergence("forced", iterations=0, worst_residual=1.0)

    monkeypatch.setattr(experiments, "lowest_eigenpairs", broken)
    with pytest.raises(NoConvergence):
        run_campaign(_config(N=50), reference=reference)


def test_refusals():
    with pytest.raises(InfeasibleSpec):
        run_campaign(_config(spec=_spec(V=4.0)))
    with pytest.raises(DegenerateLimit):
        run_campaign(_config(indices=(2,), shape=ShapeSpec.unit_cube(2), eps=(1 / 8,), eps_ref=1 / 16))


def test_concentration_profile(reference):
    (st,) = run_campaign(_config(eps=(1 / 32,), N=600), reference=reference)
    prof = concentration_profile(st)
    assert prof.t[0] == 0 and 0.9 <= prof.exceedance[0] <= 1.0
    assert prof.t[-1] > prof.max_deviation and prof.exceedance[-1] == 0
    assert prof.c_hat > 0
    s = prof.t**2 / st.eps
    assert np.all(prof.exceedance <= 4 * np.exp(-prof.c_hat * s) + 1e-12)
    # no sample beyond the envelope-implied t*
    assert prof.max_deviation <= prof.t_star
    with pytest.raises(InsufficientSamples):
        concentration_profile(run_campaign(_config(N=100), reference=reference)[0])


def test_ladder_trends(reference):
    ladder = run_campaign(_config(eps=(1 / 16, 1 / 32, 1 / 64), N=300, seed=4), reference=reference)
    assert eigenfunction_convergence(ladder)["decreasing"]
    assert mean_convergence(ladder)["decreasing"]
    table = energy_decomposition(ladder)
    assert table["kinetic_decreasing"] and table["g2_decreasing"] and table["finest_ratio_ok"]


def test_eigenfunction_discrepancy_against_sine():
    lat = discretize(UNIT, 1 / 64)
    g = lowest_eigenpairs(assemble(lat, np.zeros(lat.n)), 1).vector(1)
    x = lat.points[:, 0]
    disc = np.sum(lat.eps * np.abs(g**2 / lat.eps - 2 * np.sin(np.pi * x) ** 2))
    assert disc <= 0.05


def test_deterministic_run_matches_reference_resolution():
    U = ProfileFn.polynomial([(10.0, [1]), (-10.0, [2])])
    ref = homogenized_spectrum(UNIT, U, 1, 1 / 64)
    spec = PotentialSpec(U=U, V=ProfileFn.constant(0.0), a=-1.0, b=3.0)
    (st,) = run_campaign(_config(eps=(1 / 128,), N=2, spec=spec), reference=ref)
    # eps_ref / 2 is the middle level of the reference run
    assert st.mean[0] == pytest.approx(ref.level_eigenvalues[1, 0], rel=1e-10)
    coarse = ref.level_lattice(0)
    phi = ref.phi(1)(coarse.points)
    coarse_error = np.sum(coarse.eps * np.abs(ref.level_functions[0][:, 0] ** 2 - phi**2))
    assert 0 < st.l1_discrepancy[0] <= coarse_error


def test_diagnostics_null_calibration():
    A = np.array([[1.2, 0.0], [0.8, 0.9]])
    pred = A.T @ A
    z = np.random.default_rng(0).normal(size=(4000, 2)) @ A
    verdicts = diagnose_samples(z, pred)
    assert all(v.status == "pass" for v in verdicts)
    bad = diagnose_samples(np.random.default_rng(1).choice([-1.0, 1.0], size=(2000, 1)), [[1.0]])
    assert any(v.status == "fail" for v in bad)
    with pytest.raises(InsufficientSamples):
        diagnose_samples(z[:999])


def test_oracle_single_site():
    rep = exact_oracle(_spec(), path_lattice(1, 1.0), 1)
    assert rep.mean == 2.0 and rep.variance == 1.0
    assert rep.eigenvalues.tolist() == [1.0, 3.0]
    assert rep.increments[:, 0].tolist() == [-1.0, 1.0]
    data = json.loads(rep.to_json())
    assert data["telescoping_residual"] == 0.0


@pytest.mark.parametrize("n,k", [(4, 1), (7, 3), (10, 2)])
def test_oracle_martingale_structure(n, k):
    spec = _spec(V=0.5, U=0.2, a=-2.0, b=2.0)
    rep = exact_oracle(spec, path_lattice(n, 1 / (n + 1)), k)
    assert rep.telescoping_residual <= 1e-12 * max(1.0, abs(rep.mean))
    assert rep.orthogonality_residual <= 1e-12
    assert rep.variance_residual <= 1e-12
    assert rep.increment_second_moments.sum() == pytest.approx(rep.variance, rel=1e-12)
    assert rep.mean == pytest.approx(rep.eigenvalues.mean(), rel=1e-14)


def test_oracle_two_dimensional_and_limits():
    lat = discretize(ShapeSpec.unit_cube(2), 1 / 5)
    rep = exact_oracle(_spec(), lat, 2)  # degenerate at xi = 0 but sorting keeps lambda_2 defined
    assert rep.telescoping_residual <= 1e-12
    with pytest.raises(TooLarge):
        exact_oracle(_spec(), path_lattice(15), 1)


def test_variance_standard_error():
    x = np.random.default_rng(2).normal(size=100_000)
    assert experiments.variance_standard_error(x) == pytest.approx(math.sqrt(2 / 1e5), rel=0.05)
