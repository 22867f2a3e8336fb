import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sadmjitter.errors import NonUnitAxis, SingularMass
from sadmjitter.titop import (
    FlexAppendageParams,
    RigidBodyParams,
    angle_of_tau,
    axis_alignment,
    flex_appendage,
    jacobian_transport,
    mass_matrix,
    rigid_hub_nport,
    rotation_dcm,
    rotation_dcm6,
    skew,
    tau_of_angle,
)

angles = st.floats(-np.pi + 1e-6, np.pi - 1e-6)
unit_axes = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: np.asarray(v) / np.linalg.norm(v))


@given(angles)
def test_rational_rotation_matches_trig(a):
    R = rotation_dcm(tau=np.tan(a / 4))
    Rt = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    assert np.abs(R - Rt).max() <= 1e-12


@given(angles)
def test_tau_angle_roundtrip(a):
    assert angle_of_tau(tau_of_angle(a)) == pytest.approx(a, abs=1e-12)


@given(unit_axes, angles)
def test_rotation_about_axis(r, a):
    R = rotation_dcm(a, axis=r)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(R @ r, r, atol=1e-12)
    assert np.trace(R) == pytest.approx(1 + 2 * np.cos(a), abs=1e-12)


@given(unit_axes)
def test_axis_alignment_right_handed(r):
    P = axis_alignment(r)
    np.testing.assert_allclose(P.T @ P, np.eye(3), atol=1e-12)
    assert np.linalg.det(P) == pytest.approx(1.0)
    np.testing.assert_allclose(P[:, 2], r, atol=1e-15)


def test_axis_alignment_rejects_non_unit():
    with pytest.raises(NonUnitAxis):
        axis_alignment([0, 0, 2])


def test_rotation_needs_exactly_one_argument():
    with pytest.raises(ValueError):
        rotation_dcm()
    with pytest.raises(ValueError):
        rotation_dcm(0.1, 0.1)


def test_rotation6_block_diagonal():
    R6 = rotation_dcm6(0.3)
    np.testing.assert_allclose(R6[:3, :3], R6[3:, 3:])
    assert not R6[:3, 3:].any()


def test_skew_is_cross_product():
    a, b = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.7, -1.1])
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b))


def test_transport_composes():
    r1, r2 = np.array([1.0, 0.2, -0.4]), np.array([-0.3, 2.0, 0.1])
    np.testing.assert_allclose(jacobian_transport(r1) @ jacobian_transport(r2), jacobian_transport(r1 + r2))


def test_transport_moves_wrench():
    # a pure force F applied at r from G gives the torque r x F at G
    r, F = np.array([0.5, -1.0, 2.0]), np.array([3.0, 0.1, -0.2])
    W = jacobian_transport(r).T @ np.concatenate([F, np.zeros(3)])
    np.testing.assert_allclose(W[3:], np.cross(r, F))


def _hub():
    return RigidBodyParams(100.0, np.diag([10.0, 20.0, 30.0]), attachment_points={"P": [1.0, 0.5, -0.2]})


def test_hub_at_centre_is_inverse_mass():
    hub = rigid_hub_nport(_hub(), ["P"])
    D = hub.select(["W_ext"], ["qdd_G"]).D
    np.testing.assert_allclose(D, np.linalg.inv(mass_matrix(100.0, np.diag([10.0, 20.0, 30.0]))))


def test_hub_is_reciprocal():
    D = rigid_hub_nport(_hub(), ["P"]).D
    np.testing.assert_allclose(D, D.T, atol=1e-14)


def test_hub_validation():
    with pytest.raises(ValueError):
        RigidBodyParams(-1.0, np.eye(3))
    with pytest.raises(ValueError):
        RigidBodyParams(1.0, np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        rigid_hub_nport(_hub(), ["P", "P"])
    with pytest.raises(SingularMass):
        rigid_hub_nport(RigidBodyParams(1e-20, np.eye(3) * 1e3), [])


def _appendage():
    rng = np.random.default_rng(2)
    return FlexAppendageParams(2 * np.pi * np.array([0.5, 1.2]), 0.02, 0.3 * rng.standard_normal((2, 6)),
                               20.0, np.diag([5.0, 3.0, 6.0]), [0.0, 1.0, 0.0])


def test_appendage_static_mass():
    # at zero frequency the clamped modes add back their participation: D0 + L^T L
    p = _appendage()
    m = flex_appendage(p)
    H0 = m.C @ np.linalg.solve(-m.A, m.B) + m.D
    np.testing.assert_allclose(H0, p.static_model(), atol=1e-10)
    np.testing.assert_allclose(m.D, p.residual_mass())


def test_appendage_poles():
    p = _appendage()
    poles = flex_appendage(p).poles()
    np.testing.assert_allclose(np.sort(np.abs(poles))[::2], p.omega, rtol=1e-12)


def test_appendage_warns_on_negative_residual_mass():
    p = FlexAppendageParams([1.0], 0.01, 10 * np.ones((1, 6)), 1.0, np.eye(3), np.zeros(3))
    with pytest.warns(RuntimeWarning):
        flex_appendage(p)


def test_appendage_validation():
    with pytest.raises(ValueError):
        FlexAppendageParams([-1.0], 0.01, np.zeros((1, 6)), 1.0, np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        FlexAppendageParams([1.0], 1.0, np.zeros((1, 6)), 1.0, np.eye(3), np.zeros(3))
