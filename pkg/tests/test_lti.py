import numpy as np
import pytest
import scipy.integrate as si
import scipy.linalg as sla
import scipy.signal as sig
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_stable
from sadmjitter.errors import ChannelMismatch, NonstrictlyProper, PortMismatch, UnstableModel
from sadmjitter.lti import (
    Interconnection,
    StateSpaceModel,
    TimeSeries,
    append,
    connect,
    discretize_zoh,
    feedback,
    freq_response,
    h2_norm,
    hinf_norm,
    lyap_kron,
    simulate,
    solve_lyapunov,
    ss,
    static_gain,
)

seeds = st.integers(0, 2**31 - 1)


def _transfer_oracle(m, w):
    return m.C @ np.linalg.solve(1j * w * np.eye(m.nx) - m.A, m.B) + m.D


# ------------------------------------------------------------------ model basics

def test_port_widths_must_add_up():
    with pytest.raises(PortMismatch):
        ss(np.zeros((1, 1)), np.zeros((1, 2)), np.zeros((1, 1)), np.zeros((1, 2)), inputs=[("u", 1)])


def test_duplicate_ports_rejected():
    with pytest.raises(PortMismatch):
        static_gain(np.eye(2), inputs=["a", "a"])


def test_select_and_slices():
    m = static_gain(np.arange(6.0).reshape(2, 3), inputs=[("a", 2), "b"], outputs=["x", "y"])
    sub = m.select(["b"], ["y"])
    assert sub.D.shape == (1, 1) and sub.D[0, 0] == 5.0
    with pytest.raises(PortMismatch):
        m.input_slice("nope")


def test_matrices_are_read_only():
    m = static_gain([[1.0]])
    with pytest.raises(ValueError):
        m.D[0, 0] = 2.0


@given(seeds)
def test_freq_response_matches_resolvent(seed):
    rng = np.random.default_rng(seed)
    m = random_stable(rng, 5, 2, 3, strictly_proper=False)
    w = np.logspace(-2, 2, 7)
    H = freq_response(m, w).H
    for k, wk in enumerate(w):
        np.testing.assert_allclose(H[k], _transfer_oracle(m, wk), rtol=1e-10, atol=1e-12)


# ------------------------------------------------------------------ interconnection

def _series(a, b, name):
    a, b = a.with_name("a"), b.with_name("b")
    return connect([a, b], [("a.y", "b.u")], [("u", "a.u")], [("y", "b.y")], name=name)


@given(seeds)
def test_interconnection_associative(seed):
    rng = np.random.default_rng(seed)
    G = [random_stable(rng, int(rng.integers(1, 5)), 2, 2, strictly_proper=False) for _ in range(3)]
    left = _series(_series(G[0], G[1], "l"), G[2], "L")
    right = _series(G[0], _series(G[1], G[2], "r"), "R")
    for w in (0.03, 0.7, 11.0):
        a, b = _transfer_oracle(left, w), _transfer_oracle(right, w)
        assert np.linalg.norm(a - b) <= 1e-8 * max(1.0, np.linalg.norm(a))


@given(seeds)
def test_series_is_product(seed):
    rng = np.random.default_rng(seed)
    g1, g2 = random_stable(rng, 3, 2, 2, strictly_proper=False), random_stable(rng, 2, 2, 2, strictly_proper=False)
    s = _series(g1, g2, "s")
    for w in (0.1, 3.0):
        np.testing.assert_allclose(_transfer_oracle(s, w), _transfer_oracle(g2, w) @ _transfer_oracle(g1, w),
                                   rtol=1e-9, atol=1e-12)


def test_feedback_static_loop():
    g = static_gain([[2.0]], ["u"], ["y"])
    k = static_gain([[3.0]], ["u"], ["y"])
    cl = feedback(g, k)
    assert cl.D[0, 0] == pytest.approx(2.0 / 7.0)


def test_algebraic_loop_singular():
    from sadmjitter.errors import AlgebraicLoopSingular

    g = static_gain([[1.0]], ["u"], ["y"])
    with pytest.raises(AlgebraicLoopSingular):
        feedback(g, static_gain([[1.0]], ["u"], ["y"]), sign=1.0)


def test_compiled_interconnection_reuse():
    rng = np.random.default_rng(3)
    a, b = random_stable(rng, 2, 1, 1).with_name("a"), random_stable(rng, 3, 1, 1).with_name("b")
    net = Interconnection([a, b], [("a.y", "b.u")], [("u", "a.u")], [("y", "b.y")])
    a2 = StateSpaceModel(a.A, 2 * a.B, a.C, a.D, a.inputs, a.outputs, "a")
    np.testing.assert_allclose(_transfer_oracle(net([a2, b]), 0.5), 2 * _transfer_oracle(net([a, b]), 0.5))


def test_fan_out_and_slices():
    a = static_gain(np.eye(3), [("u", 3)], [("y", 3)], "a")
    m = connect([a], [], [("v", ["a.u[0]", "a.u[2]"])], [("y", "a.y[1:3]")])
    np.testing.assert_allclose(m.D, [[0.0], [1.0]])


def test_unknown_port_in_wiring():
    a = static_gain([[1.0]], ["u"], ["y"], "a")
    with pytest.raises(PortMismatch):
        connect([a], [("a.z", "a.u")], ["a.u"], ["a.y"])


def test_append_block_diagonal():
    rng = np.random.default_rng(0)
    a, b = random_stable(rng, 2, 1, 1), random_stable(rng, 1, 1, 1)
    a = StateSpaceModel(a.A, a.B, a.C, a.D, ["ua"], ["ya"])
    m = append(a, b)
    H = _transfer_oracle(m, 1.0)
    assert H[0, 1] == 0 and H[1, 0] == 0


# ------------------------------------------------------------------ norms

@given(seeds)
def test_lyapunov_kron_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    m = random_stable(rng, 6, 2, 1)
    Q = m.B @ m.B.T
    np.testing.assert_allclose(lyap_kron(m.A, Q), sla.solve_continuous_lyapunov(m.A, -Q), rtol=1e-8, atol=1e-10)


def test_lyapunov_large_path():
    rng = np.random.default_rng(1)
    m = random_stable(rng, 45, 1, 1)
    X = solve_lyapunov(m.A, m.B @ m.B.T)
    assert np.linalg.norm(m.A @ X + X @ m.A.T + m.B @ m.B.T) < 1e-8 * np.linalg.norm(X)


@given(seeds)
def test_h2_matches_impulse_energy(seed):
    rng = np.random.default_rng(seed)
    m = random_stable(rng, 4, 2, 2, margin=0.5)
    decay = -np.linalg.eigvals(m.A).real.max()
    T = 40.0 / decay
    energy, _ = si.quad_vec(lambda t: np.sum((m.C @ sla.expm(m.A * t) @ m.B) ** 2), 0.0, T,
                            epsrel=1e-10, epsabs=0.0)
    assert h2_norm(m) == pytest.approx(np.sqrt(energy), rel=1e-4)


def test_h2_rejects_feedthrough_and_unstable():
    with pytest.raises(NonstrictlyProper):
        h2_norm(ss([[-1.0]], [[1.0]], [[1.0]], [[1.0]]))
    with pytest.raises(UnstableModel):
        h2_norm(ss([[1.0]], [[1.0]], [[1.0]], [[0.0]]))


def test_hinf_second_order_peak():
    # |1/(s^2 + 2 z w s + w^2)| peaks at w sqrt(1 - 2 z^2) with 1 / (2 z sqrt(1 - z^2) w^2)
    w0, z = 3.0, 0.05
    m = ss([[0, 1], [-w0**2, -2 * z * w0]], [[0], [1]], [[1, 0]], [[0]])
    g, wp = hinf_norm(m)
    assert g == pytest.approx(1.0 / (2 * z * np.sqrt(1 - z * z) * w0**2), rel=1e-8)
    assert wp == pytest.approx(w0 * np.sqrt(1 - 2 * z * z), rel=1e-5)


@given(seeds)
def test_hinf_bounds_dense_grid(seed):
    rng = np.random.default_rng(seed)
    m = random_stable(rng, 5, 2, 2, strictly_proper=False)
    g, _ = hinf_norm(m)
    dense = max(np.linalg.norm(_transfer_oracle(m, w), 2) for w in np.logspace(-3, 4, 3000))
    assert g >= dense * (1 - 1e-6)


def test_hinf_static():
    assert hinf_norm(static_gain([[3.0, 4.0]]))[0] == pytest.approx(5.0)


# ------------------------------------------------------------------ time domain

@given(seeds)
def test_zoh_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    m = random_stable(rng, 4, 2, 1)
    md = discretize_zoh(m, 0.05)
    Ad, Bd, *_ = sig.cont2discrete((m.A, m.B, m.C, m.D), 0.05, method="zoh")
    np.testing.assert_allclose(md.A, Ad, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(md.B, Bd, rtol=1e-10, atol=1e-12)
    assert md.dt == 0.05


@given(seeds)
def test_time_vs_frequency_steady_state(seed):
    rng = np.random.default_rng(seed)
    m = random_stable(rng, 4, 1, 1, margin=0.5)
    w = float(rng.uniform(0.2, 3.0))
    dt = 0.002 / w
    decay = -np.linalg.eigvals(m.A).real.max()
    n_settle = int(np.ceil(30.0 / decay / dt))
    n_fit = int(np.ceil(4 * 2 * np.pi / w / dt))
    t = dt * np.arange(n_settle + n_fit)
    y = simulate(discretize_zoh(m, dt), TimeSeries(0.0, dt, ("u",), np.sin(w * t))).samples[:, 0]
    tf, yf = t[n_settle:], y[n_settle:]
    coef, *_ = np.linalg.lstsq(np.column_stack([np.sin(w * tf), np.cos(w * tf)]), yf, rcond=None)
    amp = np.hypot(*coef)
    assert amp == pytest.approx(abs(_transfer_oracle(m, w)[0, 0]), rel=5e-3)


def test_simulate_checks():
    m = discretize_zoh(ss([[-1.0]], [[1.0]], [[1.0]], [[0.0]]), 0.1)
    with pytest.raises(ChannelMismatch):
        simulate(m, TimeSeries(0.0, 0.2, ("u",), np.zeros(5)))
    with pytest.raises(ValueError):
        simulate(ss([[-1.0]], [[1.0]], [[1.0]], [[0.0]]), TimeSeries(0.0, 0.1, ("u",), np.zeros(5)))
    with pytest.raises(ChannelMismatch):
        TimeSeries(0.0, 0.1, ("a", "b"), np.zeros((4, 3)))


def test_simulate_step_matches_closed_form():
    a = 2.0
    md = discretize_zoh(ss([[-a]], [[a]], [[1.0]], [[0.0]]), 0.01)
    ts = simulate(md, TimeSeries(0.0, 0.01, ("u",), np.ones(300)))
    np.testing.assert_allclose(ts.samples[:, 0], 1 - np.exp(-a * ts.t), atol=1e-12)
