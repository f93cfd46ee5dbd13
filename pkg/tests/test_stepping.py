import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracwave.errors import BlowupDetected, BracketInvalid, CgStagnated, PicardDiverged
from fracwave.flap import constant_order
from fracwave.grid import build_grid, grid_from_step
from fracwave.orderfield import sample_order
from fracwave.stepping import (
    Stepper,
    StepperConfig,
    WaveProblem,
    WaveState,
    conjugate_gradient,
    estimate_critical_timestep,
    initial_levels,
    initial_state,
    is_stable,
    make_nonlinearity,
    oscillator_substep,
    solve,
    step_cnfp,
    step_lffp,
    step_tsfp2,
    steps_for,
)

S1 = "1+0.3*sin(pi*x/8)"


def cosine_problem(s=1.0, J=16, **kw):
    g = build_grid([(0, 2 * np.pi)], [J])
    x = g.coords[0]
    return WaveProblem(g, sample_order(s, g), np.cos(x), np.zeros(J), **kw)


def example1(order, h=1 / 16, L=16.0, **kw):
    g = grid_from_step([(-L, L)], h)
    x = g.coords[0]
    return WaveProblem(g, sample_order(order, g), np.exp(-(x**2)), np.zeros(g.N), 1.0, "cubic", **kw)


class TestNonlinearity:
    @pytest.mark.parametrize("spec", [None, "none", "0"])
    def test_none(self, spec):
        assert make_nonlinearity(spec) is None

    def test_cubic_and_expression(self):
        u = np.array([-2.0, 0.5, 3.0])
        np.testing.assert_array_equal(make_nonlinearity("cubic")(u), u**3)
        np.testing.assert_allclose(make_nonlinearity("sin(u)+u^2")(u), np.sin(u) + u**2)

    def test_rejects_space_dependence(self):
        with pytest.raises(NameError):
            make_nonlinearity("u*x")


class TestInitialLevels:
    def test_zero_data(self):
        g = build_grid([(0, 1)], [8])
        p = WaveProblem(g, sample_order(1.0, g), np.zeros(8), np.zeros(8), nonlinearity="cubic")
        u0, u1 = initial_levels(p, 0.1)
        np.testing.assert_array_equal(u1, 0.0)

    def test_single_mode(self):
        p = cosine_problem()
        tau = 0.1
        _, u1 = initial_levels(p, tau)
        np.testing.assert_allclose(u1, (1 - tau**2 / 2) * np.cos(p.grid.coords[0]), atol=1e-15)

    def test_dense_cross_check(self):
        tau = 0.01
        mf = example1(S1, h=1 / 4)
        dense = example1(S1, h=1 / 4, evaluator="dense")
        u1_mf = initial_levels(mf, tau)[1]
        u1_d = initial_levels(dense, tau)[1]
        x = mf.grid.coords[0]
        phi = np.exp(-(x**2))
        manual = phi + tau**2 / 2 * (-dense.operator.apply(phi) + phi**3)
        np.testing.assert_allclose(u1_d, manual, atol=1e-15)
        assert np.max(np.abs(u1_mf - u1_d)) <= 1e-10


class TestLffp:
    def test_second_level_single_mode(self):
        p = cosine_problem()
        tau = 0.1
        cfg = StepperConfig("LFFP", tau)
        st2 = step_lffp(p, cfg, initial_state(p, cfg))
        np.testing.assert_allclose(st2.u, (1 - 2 * tau**2 + tau**4 / 2) * np.cos(p.grid.coords[0]), atol=1e-15)
        assert st2.n == 2 and st2.t == pytest.approx(2 * tau)

    def test_zero_state_stays_zero(self):
        p = cosine_problem(nonlinearity="cubic")
        cfg = StepperConfig("LFFP", 0.1)
        s = WaveState("two-level", np.zeros(16), u_prev=np.zeros(16), n=1, threshold=1.0)
        for _ in range(5):
            s = step_lffp(p, cfg, s)
        np.testing.assert_array_equal(s.u, 0.0)

    def test_modal_invariant(self):
        # u^{n+1} = (2 - lam) u^n - u^{n-1} conserves a^2 + b^2 - (2 - lam) a b per mode
        g = build_grid([(-16, 16)], [64])
        u0 = np.random.default_rng(0).standard_normal(64)
        p = WaveProblem(g, sample_order(1.0, g), u0, np.zeros(64))
        tau = 0.9 * 2 / (math.pi / 0.5)
        cfg = StepperConfig("LFFP", tau)
        lam = tau**2 * g.mu2_half

        def invariant(s):
            a, b = np.fft.rfft(s.u), np.fft.rfft(s.u_prev)
            return np.abs(a) ** 2 + np.abs(b) ** 2 - (2 - lam) * np.real(a * np.conj(b))

        s = initial_state(p, cfg)
        q0 = invariant(s)
        s = Stepper(p, cfg).advance(s, 10_000)
        assert np.max(np.abs(invariant(s) - q0)) <= 1e-6 * np.max(q0)

    def test_blowup_above_cfl(self):
        p = example1(1.3, h=1 / 64, L=32.0)
        with pytest.raises(BlowupDetected) as info:
            solve(p, StepperConfig("LFFP", 2.0**-7), 1.0)
        assert info.value.step > 1

    def test_wrong_state_kind(self):
        p = cosine_problem()
        with pytest.raises(ValueError):
            step_lffp(p, StepperConfig("LFFP", 0.1), WaveState("pair", np.zeros(16), v=np.zeros(16)))


class TestCnfp:
    def test_single_mode_scalar_reduction(self):
        p = cosine_problem()
        tau = 0.2
        cfg = StepperConfig("CNFP", tau)
        s = initial_state(p, cfg)
        a0, a1 = 1.0, 1 - tau**2 / 2
        a2 = (2 * a1 - a0 - tau**2 / 2 * a0) / (1 + tau**2 / 2)
        np.testing.assert_allclose(step_cnfp(p, cfg, s).u, a2 * np.cos(p.grid.coords[0]), atol=1e-14)

    def test_zero_state(self):
        p = cosine_problem(nonlinearity="cubic")
        cfg = StepperConfig("CNFP", 0.1)
        s = WaveState("two-level", np.zeros(16), u_prev=np.zeros(16), n=1, threshold=1.0)
        np.testing.assert_array_equal(step_cnfp(p, cfg, s).u, 0.0)

    def test_nonlinear_step_satisfies_scheme(self):
        p = example1(S1, h=1 / 4)
        tau = 2.0**-5
        cfg = StepperConfig("CNFP", tau)
        s1 = initial_state(p, cfg)
        s2 = step_cnfp(p, cfg, s1)
        L = p.operator.apply
        lhs = (s2.u - 2 * s1.u + s1.u_prev) / tau**2
        rhs = -0.5 * (L(s2.u) + L(s1.u_prev)) + 0.5 * (s2.u**3 + s1.u_prev**3)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8
        assert s2.stats["picard_iters"] >= 2

    def test_picard_cap(self):
        p = example1(S1, h=1 / 4)
        cfg = StepperConfig("CNFP", 2.0**-5, picard_max_iters=1)
        with pytest.raises(PicardDiverged):
            step_cnfp(p, cfg, initial_state(p, cfg))

    def test_stable_far_beyond_explicit_limit(self):
        p = example1(S1, h=1 / 8)
        p.nonlinearity = None
        tau_star = estimate_critical_timestep(p, "LFFP", (0.003, 0.05), 1.0, 1000)
        assert is_stable(p, "CNFP", 10 * tau_star, horizon=2.0)


class TestConjugateGradient:
    def test_spd_system(self):
        rng = np.random.default_rng(0)
        B = rng.standard_normal((20, 20))
        A = B @ B.T + 20 * np.eye(20)
        b = rng.standard_normal(20)
        x, its = conjugate_gradient(lambda v: A @ v, b, np.zeros(20), tol=1e-13)
        np.testing.assert_allclose(A @ x, b, atol=1e-11)
        assert 0 < its <= 20

    def test_zero_rhs(self):
        x, its = conjugate_gradient(lambda v: v, np.zeros(4), np.ones(4))
        np.testing.assert_array_equal(x, 0.0)
        assert its == 0

    def test_stagnation(self):
        A = np.diag([1.0, 1e6, 1e-6, 3.0])
        with pytest.raises(CgStagnated):
            conjugate_gradient(lambda v: A @ v, np.ones(4), np.zeros(4), tol=1e-14, max_iters=2)


class TestOscillator:
    def test_quarter_period(self):
        u, v = oscillator_substep(1.0, 0.0, 2.0, math.pi / 4)
        assert u == pytest.approx(0.0, abs=1e-15)
        assert v == pytest.approx(-2.0)

    def test_free_drift(self):
        assert oscillator_substep(3.0, 5.0, 0.0, 0.1) == (3.5, 5.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
        st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
        st.floats(0, 1e3),
        st.floats(0, 10),
    )
    def test_energy(self, uh, vh, w, dt):
        e0 = abs(vh) ** 2 + w**2 * abs(uh) ** 2
        u1, v1 = oscillator_substep(uh, vh, w, dt)
        e1 = abs(v1) ** 2 + w**2 * abs(u1) ** 2
        if w == 0:
            assert v1 == vh
        else:
            assert e1 == pytest.approx(e0, rel=1e-14, abs=1e-300)


class TestTsfp2:
    @pytest.mark.parametrize("s", [0.5, 1.0, 1.3])
    @pytest.mark.parametrize("tau", [0.1, 0.7, 3.0])
    def test_exact_modal_solution(self, s, tau):
        g = build_grid([(0, 2 * np.pi)], [32])
        x = g.coords[0]
        kappa = 0.6
        phi, psi = np.cos(2 * x), 0.5 * np.sin(5 * x)
        p = WaveProblem(g, sample_order(s, g), phi, psi, kappa)
        cfg = StepperConfig("TSFP2", tau)
        st1 = step_tsfp2(p, cfg, initial_state(p, cfg))
        w2, w5 = math.sqrt(kappa) * 2**s, math.sqrt(kappa) * 5**s
        exact = np.cos(w2 * tau) * np.cos(2 * x) + 0.5 * np.sin(w5 * tau) / w5 * np.sin(5 * x)
        assert np.max(np.abs(st1.u - exact)) <= 1e-13

    def test_zero_state(self):
        p = example1(S1, h=1 / 2)
        cfg = StepperConfig("TSFP2", 0.1)
        s = WaveState("pair", np.zeros(p.grid.N), v=np.zeros(p.grid.N), threshold=1.0)
        np.testing.assert_array_equal(step_tsfp2(p, cfg, s).u, 0.0)

    def test_kick_sign_matches_leapfrog(self):
        # the perturbation kick must carry -kappa: TSFP2 and LFFP agree to O(tau^2)
        p = example1(S1, h=1 / 8)
        tau = 2.0**-9
        a = solve(p, StepperConfig("TSFP2", tau), 0.5).u
        b = solve(p, StepperConfig("LFFP", tau), 0.5).u
        assert np.max(np.abs(a - b)) <= 50 * tau**2


class TestDriver:
    @pytest.mark.parametrize("method", ["CNFP", "LFFP", "TSFP2"])
    def test_methods_agree(self, method):
        p = example1(S1, h=1 / 8)
        tau = 2.0**-9
        ref = solve(p, StepperConfig("TSFP2", tau / 4), 0.25).u
        u = solve(p, StepperConfig(method, tau), 0.25).u
        assert np.max(np.abs(u - ref)) <= 5 * tau**2

    def test_steps_for(self):
        assert steps_for(1.0, 2.0**-8) == 256
        with pytest.raises(ValueError):
            steps_for(1.0, 0.3)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StepperConfig("RK4", 0.1)
        with pytest.raises(ValueError):
            StepperConfig("LFFP", -0.1)
        assert StepperConfig("lffp", 0.1).method == "LFFP"

    def test_problem_validation(self):
        g = build_grid([(0, 1)], [8])
        with pytest.raises(ValueError):
            WaveProblem(g, sample_order(1.0, g), np.zeros(8), np.zeros(8), kappa=0.0)

    def test_callback_sees_every_step(self):
        p = cosine_problem()
        seen = []
        solve(p, StepperConfig("LFFP", 0.1), 1.0, callback=lambda s: seen.append(s.n))
        assert seen == list(range(2, 11))


class TestCriticalTimestep:
    def test_bracket_validation(self):
        p = example1(1.0, h=1 / 4)
        p.nonlinearity = None
        with pytest.raises(BracketInvalid):
            estimate_critical_timestep(p, "LFFP", (0.1, 0.05))
        with pytest.raises(BracketInvalid):
            estimate_critical_timestep(p, "LFFP", (1e-4, 1e-3), 1.0, 1000)  # both stable
        with pytest.raises(BracketInvalid):
            estimate_critical_timestep(p, "LFFP", (1.0, 2.0), 1.0, 1000)  # both unstable

    def test_matches_leapfrog_bound(self):
        # linear, constant order: the fastest mode is stable iff tau^2 |mu_max|^{2s} < 4
        g = grid_from_step([(-16, 16)], 1 / 4)
        x = g.coords[0]
        phi = np.exp(-(x**2)) + 1e-3 * np.random.default_rng(0).standard_normal(g.N)
        p = WaveProblem(g, sample_order(1.0, g), phi, np.zeros(g.N))
        tau = estimate_critical_timestep(p, "LFFP", (0.05, 0.5), 1.0, 1000)
        assert tau == pytest.approx(2 / (math.pi / 0.25), rel=0.03)

    def test_result_within_bracket_width(self):
        p = example1(0.5, h=1 / 4)
        p.nonlinearity = None
        p.phi = p.phi + 1e-3 * np.random.default_rng(1).standard_normal(p.grid.N)
        tau = estimate_critical_timestep(p, "LFFP", (0.2, 2.0), 1.0, 1000)
        assert is_stable(p, "LFFP", tau / 1.02, 1.0, 1000)
        assert not is_stable(p, "LFFP", tau * 1.02, 1.0, 1000)
