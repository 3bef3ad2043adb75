import math

import numpy as np
import pytest

from rwsbi import heat as H
from rwsbi import kernels as K


def test_solve_t0_is_zero(params_unit):
    sol = H.solve_rho(params_unit, 0.0)
    assert sol.rho0[-1] == 0.0 and sol.mass_sum[-1] == 0.0


def test_small_t_slope_is_gamma(ssrw):
    # rho_0(t) = gamma t - O(t^2) near 0; finite-difference oracle at tiny t
    for gamma in (1.0, 2.5):
        params = H.HeatParams(gamma=gamma, alpha=1.0, kernel=ssrw)
        sol = H.solve_rho(params, 1e-4, radius=16, tol=1e-12)
        slope = sol.rho0_at(1e-4) / 1e-4
        assert slope == pytest.approx(gamma, rel=2e-4)


def test_rho0_nondecreasing(sol_1e3):
    assert np.all(np.diff(sol_1e3.rho0) >= -1e-13)


def test_mass_identity_on_grid(sol_1e3):
    assert np.max(np.abs(sol_1e3.mass_sum - sol_1e3.mass_integral)) <= 1e-8


def test_total_mass_values(sol_1e3):
    s, i, d = H.total_mass(sol_1e3, 0.0)
    assert s == 0.0 and i == 0.0 and d == 0.0
    s, i, d = H.total_mass(sol_1e3, 1000.0)
    assert d <= 1e-8
    assert s == pytest.approx(118.136, abs=0.05)  # frozen from fine-grid oracle


def test_duhamel_residual_converged(sol_1e3):
    res = H.duhamel_residual(sol_1e3, [1.0, 10.0, 100.0])
    assert res <= 1e-5


def test_duhamel_residual_zero_when_gamma_zero(ssrw):
    # a gamma -> 0 solve is identically zero and the integral side vanishes
    params = H.HeatParams(gamma=1e-300, alpha=1.0, kernel=ssrw)
    sol = H.solve_rho(params, 10.0, radius=16, tol=1e-10)
    assert H.duhamel_residual(sol, [1.0, 10.0]) <= 1e-300


def test_duhamel_residual_coarse_solve_is_worse(params_unit, sol_1e3):
    coarse = H.solve_rho(params_unit, 100.0, tol=1e-3)
    fine_res = H.duhamel_residual(sol_1e3, [100.0])
    coarse_res = H.duhamel_residual(coarse, [100.0])
    assert coarse_res > fine_res


def test_uniqueness_proxy_two_steppers(params_unit, sol_1e3):
    grid, f = H.solve_rho0_volterra(params_unit, 200.0, h=0.01)
    diff = np.abs(sol_1e3.rho0_spline()(grid) - f)
    assert diff.max() <= 1e-5


def test_alpha_scaling_identity(ssrw):
    # alpha * solve(gamma, alpha) == solve(gamma * alpha, 1) pointwise
    a = H.solve_rho(H.HeatParams(0.7, 2.3, ssrw), 50.0, tol=1e-10)
    b = H.solve_rho(H.HeatParams(0.7 * 2.3, 1.0, ssrw), 50.0, tol=1e-10)
    sa, sb = a.rho0_spline(), b.rho0_spline()
    for t in (1.0, 10.0, 50.0):
        assert 2.3 * float(sa(t)) == pytest.approx(float(sb(t)), abs=2e-6)


def test_radius_too_small_raises(params_unit):
    with pytest.raises(H.RadiusTooSmall):
        H.solve_rho(params_unit, 400.0, radius=20, tol=1e-9)


def test_asymptotic_rho0_printed_value(params_unit):
    # (1/2)*4 - log 4 + log sqrt(2 pi), high-precision oracle
    val = H.asymptotic_rho0(math.e**4, params_unit)
    assert val == pytest.approx(1.53264417208478, abs=1e-12)


def test_asymptotic_rho0_gamma_shift(ssrw):
    t = 50.0
    for alpha in (1.0, 2.0):
        p1 = H.HeatParams(1.0, alpha, ssrw)
        p2 = H.HeatParams(2.0, alpha, ssrw)
        d = H.asymptotic_rho0(t, p2) - H.asymptotic_rho0(t, p1)
        assert d == pytest.approx(math.log(2.0) / alpha, abs=1e-14)


def test_asymptotic_rho0_alpha_scaling(ssrw):
    t = 300.0
    p = H.HeatParams(1.3, 1.7, ssrw)
    q = H.HeatParams(1.3 * 1.7, 1.0, ssrw)
    assert H.asymptotic_rho0(t, p) == pytest.approx(H.asymptotic_rho0(t, q) / 1.7,
                                                    abs=1e-14)


def test_asymptotic_rho0_domain(params_unit):
    with pytest.raises(H.DomainError):
        H.asymptotic_rho0(2.0, params_unit)


def test_asymptotic_R_printed_value(params_unit):
    assert H.asymptotic_R(1e4, params_unit) == pytest.approx(734.878838253912, abs=1e-9)


def test_asymptotic_R_gamma_independent(ssrw):
    t = 123.0
    a = H.asymptotic_R(t, H.HeatParams(1.0, 1.0, ssrw))
    b = H.asymptotic_R(t, H.HeatParams(9.0, 1.0, ssrw))
    assert a == b


def test_asymptotic_R_quadrupling_ratio(params_unit):
    # ratio -> 2 as t -> infinity
    r1 = H.asymptotic_R(4e3, params_unit) / H.asymptotic_R(1e3, params_unit)
    r2 = H.asymptotic_R(4e7, params_unit) / H.asymptotic_R(1e7, params_unit)
    assert abs(r2 - 2.0) < abs(r1 - 2.0)
    assert r1 == pytest.approx(2.0 * math.log(4e3) / math.log(1e3), rel=1e-12)


def test_tilde_rho_values():
    assert H.tilde_rho(0.0) == pytest.approx(0.5, abs=1e-15)
    assert H.tilde_rho(1.0) == pytest.approx(0.158655253931457, abs=1e-12)
    assert H.tilde_rho(-1.0) == H.tilde_rho(1.0)


def test_tilde_rho_integral_agrees():
    for y in (0.0, 0.5, 1.0, 2.0, 3.0):
        assert abs(H.tilde_rho(y) - H.tilde_rho_integral(y)) <= 1e-8


def test_rescaled_profile_center_and_symmetry(params_unit):
    sol = H.solve_rho(params_unit, 100.0, tol=1e-10, snapshot_times=[100.0])
    ygrid = np.arange(-3.0, 3.0001, 0.25)
    sample = H.rescaled_profile(sol, 100.0, ygrid)
    vals = dict(sample.points)
    assert vals[0.0] == pytest.approx(sol.rho0_at(100.0) / math.log(100.0), abs=1e-12)
    for y in (0.5, 1.0, 2.0):
        assert vals[y] == pytest.approx(vals[-y], abs=1e-9)


def test_rescaled_profile_radius_guard(params_unit):
    sol = H.solve_rho(params_unit, 100.0, radius=40, tol=1e-7,
                      snapshot_times=[100.0], leak_tol=1.0)
    with pytest.raises(H.RadiusTooSmall):
        H.rescaled_profile(sol, 100.0, [0.0, 8.0])


def test_sub_supersolution_small_scale(params_unit):
    K_sub = H.scan_subsolution_K(params_unit, 0.0, t_hi=1e3, n_grid=16)
    res = H.check_sub_supersolution(params_unit, 0.0, K_sub, "sub",
                                    np.geomspace(K_sub, 1e3, 16))
    assert all(r[3] for r in res)
    K_sup, Kp = H.scan_supersolution_constants(params_unit, 2.0, t_hi=1e3, n_grid=16)
    res = H.check_sub_supersolution(params_unit, 2.0, K_sup, "super",
                                    np.geomspace(K_sup, 1e3, 16), K_prime=Kp)
    assert all(r[3] for r in res)


def test_sub_supersolution_parameter_order(params_unit):
    crit = math.log(math.sqrt(2.0 * math.pi))
    with pytest.raises(H.ParameterOrderViolated):
        H.check_sub_supersolution(params_unit, crit, 8.0, "sub", [10.0])
    with pytest.raises(H.ParameterOrderViolated):
        H.check_sub_supersolution(params_unit, crit - 0.5, 8.0, "super", [10.0],
                                  K_prime=1.0)
    with pytest.raises(H.ParameterOrderViolated):
        H.check_sub_supersolution(params_unit, crit + 0.5, 8.0, "sub", [10.0])


def test_heat_params_validation(ssrw):
    with pytest.raises(ValueError):
        H.HeatParams(gamma=0.0, alpha=1.0, kernel=ssrw)
    with pytest.raises(ValueError):
        H.HeatParams(gamma=1.0, alpha=-1.0, kernel=ssrw)
