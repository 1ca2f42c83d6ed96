import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipres.dyson import dyson_term
from dipres.errors import IntermediateResonance, UncoupledPair, ZeroField
from dipres.fields import Constant, Sine, VectorPotentialPulse
from dipres.propagator import WaveState, propagate
from dipres.slow import (
    i2_slow,
    m1_slow,
    pf_max,
    pf_max_inverted,
    pf_max_strong_field,
    pf_max_table,
    pop3ls_at_resonance,
    rabi_population,
    reduced_params,
    sign_dependence_condition,
    slow_variation_check,
)
from dipres.system import Regime, TransferPath, make_path, new_system


def _two(mu=0.1, dmu=0.5, de=0.01):
    return new_system([0.0, de], [[0.0, mu], [mu, dmu]])


def test_reduced_params_at_resonance(sys2):
    assert reduced_params(sys2, 0, 1, 0.02, 3.0).d == 0.0


def test_reduced_params_value(sys2):
    rp = reduced_params(sys2, 0, 1, 0.01, 4.0)
    assert rp.d == pytest.approx(2.5)
    assert rp.theta == pytest.approx(0.1 * 0.01 * 4.0)
    assert rp.A0 == pytest.approx(0.02)
    assert rp.mu_ratio == pytest.approx(0.2)


def test_reduced_params_errors():
    with pytest.raises(UncoupledPair):
        reduced_params(_two(mu=0.0), 0, 1, 0.01, 1.0)
    with pytest.raises(ZeroField):
        reduced_params(_two(), 0, 1, 0.0, 1.0)


def test_rabi_population_examples():
    assert rabi_population(0.0, math.pi / 2) == pytest.approx(1.0)
    assert rabi_population(1.7, 0.0) == 0.0
    assert rabi_population(1.0, math.pi / (2 * math.sqrt(2))) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(d=st.floats(-20, 20))
def test_rabi_envelope(d):
    theta = np.linspace(0, 4 * math.pi / math.sqrt(1 + d * d), 4001)
    p = rabi_population(d, theta)
    cap = 1 / (1 + d * d)
    assert np.all(p <= cap * (1 + 1e-14))
    assert p.max() == pytest.approx(cap, rel=1e-5)


def test_pf_max_examples(sys2):
    assert pf_max(sys2, 0, 1, 0.02) == pytest.approx(1.0)
    s = _two(mu=0.1, dmu=1.0)
    assert pf_max(s, 0, 1, -0.01) == pytest.approx(0.1**2 / (0.1**2 + 1.0), rel=1e-12)
    assert pf_max(s, 0, 1, -0.01) == pytest.approx(0.009901, abs=1e-6)
    assert pf_max_inverted(0.1, 1.0) == pytest.approx(0.009901, abs=1e-6)
    s = _two(mu=1.0, dmu=1.0)
    assert pf_max(s, 0, 1, 1e6 * 0.01) == pytest.approx(0.8, abs=1e-5)
    assert pf_max_strong_field(1.0, 1.0) == pytest.approx(0.8)


def test_pf_max_global_maximum(sys2):
    E = np.linspace(-0.1, 0.1, 20001)
    E = E[E != 0]
    p = pf_max(sys2, 0, 1, E)
    assert E[np.argmax(p)] == pytest.approx(0.02, abs=1e-5)
    assert p.max() <= 1.0


def test_pf_max_strong_field_both_signs(sys2):
    plus, minus = pf_max(sys2, 0, 1, 1e3 * 0.02), pf_max(sys2, 0, 1, -1e3 * 0.02)
    lim = pf_max_strong_field(0.1, 0.5)
    assert abs(plus - lim) <= 1e-2 * lim and abs(minus - lim) <= 1e-2 * lim
    far = pf_max(sys2, 0, 1, np.array([1e7, -1e7]) * 0.02)
    assert np.all(np.abs(far - lim) <= 1e-6)


def test_pf_max_table_columns(sys2):
    tab = pf_max_table(sys2, 0, 1, [-1.0, 1.0, 2.0])
    assert tab.shape == (3, 3)
    assert tab[1, 1] == 0.0 and tab[1, 2] == 1.0
    assert tab[0, 2] == pytest.approx(0.1**2 / (0.1**2 + 0.5**2))


def test_m1_slow_limits(sys2):
    t = np.array([10.0, 100.0])
    assert np.allclose(m1_slow(sys2, Constant(0.02), 0, 1, t, check_regime=False), 1j * 0.1 * 0.02 * t)
    assert np.all(m1_slow(sys2, Constant(0.0), 0, 1, t, check_regime=False) == 0)


@pytest.mark.parametrize("E", [0.004, 0.015, -0.03])
def test_m1_slow_exact_for_constant(sys2, E):
    T = 900.0
    term = dyson_term(sys2, Constant(E), 0, 1, 1, T, n_out=31)
    m1 = m1_slow(sys2, Constant(E), 0, 1, term.times, check_regime=False)
    assert np.allclose(np.abs(m1), np.abs(term.values), rtol=1e-8, atol=1e-12)
    g = 0.01 - 0.5 * E
    closed = 0.1 * E * np.expm1(1j * g * term.times) / g
    assert np.max(np.abs(m1 - closed)) <= 1e-10 * np.max(np.abs(closed))


def test_m1_slow_warns_outside_slow_regime(sys2):
    with pytest.warns(UserWarning):
        m1_slow(sys2, Sine(0.01, 1.0), 0, 1, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        m1_slow(sys2, Constant(0.01), 0, 1, 1.0)


def test_i2_slow_quadratic_growth(sys3):
    A0 = 0.025 / 0.8
    P = [abs(i2_slow(sys3, Constant(A0), (0, 1, 2), t)) ** 2 for t in (1e3, 2e3)]
    assert P[1] / P[0] == pytest.approx(4.0, rel=1e-12)
    assert pop3ls_at_resonance(sys3, (0, 1, 2), 2e3) == pytest.approx(P[1], rel=1e-12)


def test_i2_slow_uncoupled_step(sys3):
    p = make_path(sys3, (0, 1, 2))
    s = new_system(sys3.energies, np.array([[0, 0.1, 0], [0.1, 0.5, 0.0], [0, 0.0, 0.8]]))
    blocked = TransferPath(p.levels, p.step_deltas, p.overall_delta, (0.1, 0.0))
    assert i2_slow(s, Constant(0.03), blocked, 50.0) == pytest.approx(0.0, abs=1e-15)


def test_i2_slow_matches_dyson_near_overall_resonance(sys3):
    s = sys3.scaled_couplings(1e-3)
    A0 = 0.025 / 0.8
    T = 5e4
    ref = dyson_term(s, Constant(A0), 0, 2, 2, T, t_eval=[T]).values[-1]
    approx = i2_slow(s, Constant(A0), (0, 1, 2), T)
    assert abs(approx - ref) <= 0.01 * abs(ref)


def test_i2_slow_intermediate_resonance(sys3):
    E = 0.01 / 0.5  # step 0 -> 1 resonant
    with pytest.raises(IntermediateResonance):
        i2_slow(sys3, Constant(E), (0, 1, 2), 10.0)


def test_i2_slow_dipole_harmonic_double_resonance():
    s = new_system([0, 0.01, 0.02], [[0, 0.1, 0], [0.1, 0.5, 0.2], [0, 0.2, 1.0]])
    t = 40.0
    v = i2_slow(s, Constant(0.02), (0, 1, 2), t)
    assert v == pytest.approx(-0.5 * 0.1 * 0.2 * 0.02**2 * t**2)


def test_slow_variation_constant():
    rep = slow_variation_check(Constant(0.1), 100.0)
    assert rep.t_omega0 == 0 and rep.derivative_ratio == 0
    assert rep.passed


def test_slow_variation_sine_fails():
    rep = slow_variation_check(Sine(0.1, 0.3), 10 / 0.3)
    assert rep.t_omega0 == pytest.approx(10.0)
    assert not rep.passed and rep.kind is Regime.FAST


def test_slow_variation_many_cycle_pulse_half_cycle():
    f = VectorPotentialPulse.centered(0.1, 0.5, 20.0)
    rep = slow_variation_check(f, math.pi / 0.5)
    assert rep.t_omega0 == pytest.approx(math.pi)
    assert rep.kind is Regime.INTERMEDIATE
    assert not rep.majorant_valid


def test_sign_dependence_examples():
    slow = VectorPotentialPulse.centered(0.01, 1e-9, 1.0)
    assert sign_dependence_condition(_two(mu=0.001, dmu=0.1), 0, 1, slow).kind == "sign-selective"
    assert sign_dependence_condition(_two(mu=1.0, dmu=0.1), 0, 1, Sine(0.1, 1.0)).kind == "sign-blind"
    assert sign_dependence_condition(_two(mu=1.0, dmu=0.1), 0, 1, slow).kind == "sign-blind"
    # mu / d_mu = 1 with Omega0 at q = 1
    s = _two(mu=0.1, dmu=0.1)
    w0 = 0.1 * 0.01 / (math.pi * 0.1)
    rep = sign_dependence_condition(s, 0, 1, Sine(0.1, w0))
    assert rep.omega_ratio == pytest.approx(1.0)
    assert rep.kind == "marginal"


def test_slow_pulse_follows_dc_field_eigenstate(sys2):
    f = VectorPotentialPulse.centered(0.02, 1e-4, 1.0)
    lo, hi = f.support(6.0)
    tr = propagate(sys2, f, WaveState.basis(2, 0, lo), hi, n_out=801)
    _, V = np.linalg.eigh(sys2.hamiltonian(f.value(tr.times)))
    v = V[0][:, np.argmax(np.abs(V[0][0]))]
    adiabatic = []
    for Vj in V:
        v = Vj[:, np.argmax(np.abs(Vj.T @ v))]
        adiabatic.append(v[1] ** 2)
    assert np.max(np.abs(tr.populations[:, 1] - np.array(adiabatic))) < 0.01
    assert tr.populations[:, 1].max() > 0.9 * 0.5


@pytest.mark.xfail(strict=True, reason="sign gap at 1e3 A0 is O(A0/E), about 5e-4 here")
def test_pf_max_sign_gap_at_1e3_a0(sys2):
    plus, minus = pf_max(sys2, 0, 1, 1e3 * 0.02), pf_max(sys2, 0, 1, -1e3 * 0.02)
    assert abs(plus - minus) <= 1e-6
