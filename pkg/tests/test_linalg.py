import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svperturb.linalg import (
    as_matrix,
    condition_number,
    frobenius_norm,
    matrix_from_text,
    matrix_to_text,
    singular_values,
    svd,
    sym_eig,
)

from oracles import brute_force_singvals, jacobi_sym_eigvals


def test_svd_diagonal_values():
    res = svd(np.diag([3.0, 0.0, -2.0]))
    np.testing.assert_allclose(res.s, [3.0, 2.0, 0.0], atol=1e-14)


def test_svd_identity():
    res = svd(np.eye(4))
    np.testing.assert_allclose(res.s, np.ones(4), atol=1e-14)


def test_svd_matches_brute_force_jacobi():
    a = np.random.default_rng(42).standard_normal((5, 5))
    expected = brute_force_singvals(a)
    np.testing.assert_allclose(svd(a).s, expected, atol=1e-9)


@pytest.mark.parametrize("shape", [(4, 4), (6, 3), (3, 6)])
def test_svd_contract(shape):
    a = np.random.default_rng(7).standard_normal(shape)
    res = svd(a)
    k = min(shape)
    assert res.s.shape == (k,)
    assert np.all(np.diff(res.s) <= 0) and np.all(res.s >= 0)
    # orthonormal columns
    np.testing.assert_allclose(res.U.T @ res.U, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(res.V.T @ res.V, np.eye(k), atol=1e-12)
    # defining equations and reconstruction
    np.testing.assert_allclose(a @ res.V, res.U * res.s, atol=1e-12)
    np.testing.assert_allclose(a.T @ res.U, res.V * res.s, atol=1e-12)
    recon = res.U @ np.diag(res.s) @ res.V.T
    assert frobenius_norm(a - recon) <= 1e-10 * max(1.0, frobenius_norm(a))
    # Frobenius identity
    assert abs(frobenius_norm(a) - np.sqrt(np.sum(res.s**2))) <= 1e-10


def test_svd_sign_convention_deterministic():
    a = np.random.default_rng(3).standard_normal((5, 4))
    r1, r2 = svd(a), svd(a)
    np.testing.assert_array_equal(r1.U, r2.U)
    np.testing.assert_array_equal(r1.V, r2.V)
    for i in range(r1.s.size):
        k = np.argmax(np.abs(r1.U[:, i]))
        assert r1.U[k, i] > 0


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        as_matrix(np.array([np.inf]))


def test_sym_eig_diagonal():
    res = sym_eig(np.diag([2.0, -1.0]))
    np.testing.assert_allclose(res.lam, [2.0, -1.0], atol=1e-14)


def test_sym_eig_exchange():
    res = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(res.lam, [1.0, -1.0], atol=1e-14)


def test_sym_eig_trace_identity():
    a = np.random.default_rng(11).standard_normal((6, 6))
    n_mat = a + a.T
    res = sym_eig(n_mat)
    assert abs(np.trace(n_mat) - np.sum(res.lam)) <= 1e-10
    for i in range(6):
        resid = np.linalg.norm(n_mat @ res.Q[:, i] - res.lam[i] * res.Q[:, i])
        assert resid <= 1e-10 * max(1.0, frobenius_norm(n_mat))
    np.testing.assert_allclose(res.Q.T @ res.Q, np.eye(6), atol=1e-12)


def test_sym_eig_rejects_bad_input():
    with pytest.raises(ValueError):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(ValueError):
        sym_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_frobenius_values():
    assert frobenius_norm(np.eye(3)) == pytest.approx(np.sqrt(3.0), abs=1e-15)
    assert frobenius_norm(np.zeros((2, 5))) == 0.0
    assert frobenius_norm(np.array([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(np.sqrt(30.0), abs=1e-14)


def test_condition_number_cases():
    assert condition_number(np.diag([4.0, 2.0, 1.0])) == pytest.approx(4.0, abs=1e-12)
    # the zero singular value is discarded by definition
    assert condition_number(np.diag([3.0, 0.0, 2.0])) == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(ValueError):
        condition_number(np.zeros((3, 3)))


@settings(max_examples=40, deadline=None, derandomize=True)
@given(
    arrays(np.float64, (4, 4), elements=st.floats(-10, 10)),
    arrays(np.float64, (4, 4), elements=st.floats(-10, 10)),
)
def test_wielandt_hoffman_and_uniform_continuity(a, b):
    sa, sb = singular_values(a), singular_values(b)
    gap = frobenius_norm(a - b)
    assert np.sum((sa - sb) ** 2) <= gap**2 + 1e-9 * max(1.0, gap**2)
    s1_gap = singular_values(a - b)[0] if gap > 0 else 0.0
    assert np.max(np.abs(sa - sb)) <= s1_gap + 1e-10


def test_transpose_invariance():
    a = np.random.default_rng(13).standard_normal((7, 4))
    np.testing.assert_allclose(singular_values(a), singular_values(a.T), atol=1e-10)


def test_operator_norm_bracketing():
    rng = np.random.default_rng(17)
    a = rng.standard_normal((6, 6))
    s1 = singular_values(a)[0]
    assert s1 <= frobenius_norm(a) + 1e-12
    for _ in range(200):
        x = rng.standard_normal(6)
        x /= np.linalg.norm(x)
        assert np.linalg.norm(a @ x) <= s1 + 1e-10


def test_cauchy_deletion_interlacing():
    rng = np.random.default_rng(19)
    a = rng.standard_normal((8, 8))
    for m in (1, 2, 3):
        keep = sorted(rng.choice(8, size=8 - m, replace=False))
        sa = singular_values(a)
        sb = singular_values(a[:, keep])
        for i in range(8 - m):
            assert sa[i] >= sb[i] - 1e-12
            assert sb[i] >= sa[i + m] - 1e-12


def test_matrix_text_roundtrip_exact():
    rng = np.random.default_rng(23)
    a = rng.standard_normal((3, 5)) * np.exp(rng.uniform(-20, 20, size=(3, 5)))
    text = matrix_to_text(a)
    assert text.splitlines()[0] == "3 5"
    back = matrix_from_text(text)
    np.testing.assert_array_equal(a, back)


def test_matrix_text_rejects_malformed():
    with pytest.raises(ValueError):
        matrix_from_text("")
    with pytest.raises(ValueError):
        matrix_from_text("2 2\n1 2\n")
    with pytest.raises(ValueError):
        matrix_from_text("1 2\n1 2 3\n")


def test_jacobi_oracle_self_check():
    # the test oracle itself must agree with basic identities
    a = np.random.default_rng(29).standard_normal((5, 5))
    sym = a + a.T
    lam = jacobi_sym_eigvals(sym)
    assert abs(np.sum(lam) - np.trace(sym)) <= 1e-9
