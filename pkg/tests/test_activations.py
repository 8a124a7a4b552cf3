import numpy as np
import pytest

from svperturb.activations import (
    ActivationMask,
    apply_mask,
    abs_invariance_check,
    hard_bound_trials,
    hard_bounds,
    identity_mask,
    product_entry_bound,
    random_mask,
    relu_identities,
    residual_product,
    verify_hard_bound,
)
from svperturb.linalg import frobenius_norm, singular_values


def test_mask_invariants():
    d = ActivationMask(n=5, eta=0.0, indices=(1, 3))
    assert d.m == 2
    assert d.trace() == pytest.approx(2 * 0.0 + 3)
    np.testing.assert_array_equal(d.diagonal(), [1, 0, 1, 0, 1])
    with pytest.raises(ValueError):
        ActivationMask(n=3, eta=0.0, indices=(2, 1))
    with pytest.raises(ValueError):
        ActivationMask(n=3, eta=0.0, indices=(3,))
    with pytest.raises(ValueError):
        ActivationMask(n=3, eta=1.5, indices=())


def test_apply_mask_cases():
    m = np.arange(9, dtype=float).reshape(3, 3)
    assert np.array_equal(apply_mask(identity_mask(3), m, "left"), m)
    zero = ActivationMask(n=3, eta=0.0, indices=(0, 1, 2))
    assert np.all(apply_mask(zero, m, "right") == 0)
    sign = ActivationMask(n=3, eta=-1.0, indices=(0,))
    left = apply_mask(sign, m, "left")
    np.testing.assert_array_equal(left[0], -m[0])
    np.testing.assert_array_equal(left[1:], m[1:])
    right = apply_mask(sign, m, "right")
    np.testing.assert_array_equal(right[:, 0], -m[:, 0])
    with pytest.raises(ValueError):
        apply_mask(sign, np.ones((2, 2)), "left")
    with pytest.raises(ValueError):
        apply_mask(sign, m, "middle")


def test_abs_invariance():
    m = np.diag([1.0, 2.0])
    assert abs_invariance_check(m, ActivationMask(n=2, eta=-1.0, indices=(0,))) == 0.0
    assert abs_invariance_check(m, ActivationMask(n=2, eta=-1.0, indices=())) == 0.0
    rng = np.random.default_rng(0)
    for t in range(100):
        a = rng.standard_normal((7, 7))
        d = random_mask(rng, 7, int(rng.integers(0, 8)), -1.0)
        dev = abs_invariance_check(a, d)
        assert dev <= 1e-10 * max(1.0, singular_values(a)[0])
    with pytest.raises(ValueError):
        abs_invariance_check(m, ActivationMask(n=2, eta=0.0, indices=(0,)))


def test_relu_identities_degenerate():
    m = np.random.default_rng(1).standard_normal((4, 4))
    out = relu_identities(m, identity_mask(4))
    assert out.trace_lhs == pytest.approx(0.0, abs=1e-12)
    assert out.trace_rhs == 0.0
    full = ActivationMask(n=4, eta=0.0, indices=(0, 1, 2, 3))
    out = relu_identities(m, full)
    assert out.trace_lhs == pytest.approx(frobenius_norm(m) ** 2, rel=1e-12)
    assert out.trace_rhs == pytest.approx(frobenius_norm(m) ** 2, rel=1e-12)


def test_relu_identities_random():
    rng = np.random.default_rng(2)
    for t in range(100):
        m = rng.standard_normal((6, 6))
        d = random_mask(rng, 6, 2, 0.0)
        out = relu_identities(m, d)
        assert out.trace_lhs == pytest.approx(out.trace_rhs, abs=1e-9)
        assert out.singval_diff_sq <= out.column_mass + 1e-12
        # monotonicity and the absolute-sum form of the trace identity
        s = singular_values(m)
        st_r = singular_values(apply_mask(d, m, "right"))
        st_l = singular_values(apply_mask(d, m, "left"))
        assert np.all(s >= st_r - 1e-12) and np.all(s >= st_l - 1e-12)
        assert np.sum(np.abs(s**2 - st_r**2)) == pytest.approx(out.trace_lhs, abs=1e-9)
    with pytest.raises(ValueError):
        relu_identities(m, ActivationMask(n=6, eta=-1.0, indices=(0,)))


def test_input_output_duality():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((5, 5))
    d = random_mask(rng, 5, 2, 0.5)
    md = apply_mask(d, m, "right")
    dmt = apply_mask(d, m.T, "left")
    np.testing.assert_allclose(singular_values(md), singular_values(dmt), atol=1e-10)


def test_operator_norm_hard_bound():
    n, c = 6, 0.1
    rng = np.random.default_rng(4)
    w = rng.uniform(-c, c, (n, n))
    assert singular_values(w)[0] <= c * n + 1e-12
    all_c = np.full((n, n), c)
    assert singular_values(all_c)[0] == pytest.approx(c * n, rel=1e-12)


def test_product_entry_bound_cases():
    n = 4
    c = 1.0 / n
    all_c = np.full((n, n), c)
    one = product_entry_bound([all_c], [identity_mask(n)], c)
    assert one.hypothesis_ok and one.max_entry == pytest.approx(c, rel=1e-12)
    two = product_entry_bound([all_c, all_c], [identity_mask(n)] * 2, c)
    assert two.max_entry == pytest.approx(c, rel=1e-12)  # n*c^2 = c at the boundary
    rng = np.random.default_rng(5)
    n, c = 8, 1.0 / 16
    for t in range(100):
        ws = [rng.uniform(-c, c, (n, n)) for _ in range(3)]
        ds = [random_mask(rng, n, int(rng.integers(0, n + 1)), -1.0) for _ in range(3)]
        out = product_entry_bound(ws, ds, c)
        assert out.hypothesis_ok
        assert out.max_entry <= c + 1e-12
    bad = product_entry_bound([np.full((2, 2), 3.0)], [identity_mask(2)], 1.0)
    assert not bad.hypothesis_ok  # flagged, result still returned
    assert bad.product.shape == (2, 2)


def test_hard_bounds_reference_values():
    n = 6
    reps = hard_bounds(1.0 / (3 * n), n, 0, -1.0)
    assert len(reps) == 1 and reps[0].applicable
    assert reps[0].bound_value == pytest.approx(2.0, rel=1e-12)

    n = 8
    reps = {r.name: r for r in hard_bounds(1.0 / (3 * n), n, 2, 0.0)}
    assert reps["relu_small_m"].applicable
    assert reps["relu_small_m"].bound_value == pytest.approx(8.0, rel=1e-12)
    # the companion ReLU bounds need much smaller c at this size
    assert not reps["relu_trace"].applicable
    assert not reps["relu_diff"].applicable

    tiny = hard_bounds(1e-9, 5, 0, -1.0)[0]
    assert tiny.bound_value == pytest.approx(1.0, abs=1e-7)


def test_hard_bounds_leaky_refuses_small_n():
    reps = {r.name: r for r in hard_bounds(0.01, 4, 1, 0.9)}
    assert not reps["leaky_sqrt_m"].applicable  # n >= 5 required
    reps = {r.name: r for r in hard_bounds(0.01, 10, 1, 0.9)}
    assert reps["leaky_sqrt_m"].applicable


def test_singular_value_sandwich():
    rng = np.random.default_rng(6)
    n, c = 7, 1.0 / 21
    for _ in range(50):
        ws = [rng.uniform(-c, c, (n, n))]
        ds = [random_mask(rng, n, int(rng.integers(0, n + 1)), 0.0)]
        m1 = residual_product(ws, ds)
        s = singular_values(m1)
        assert 1.0 - c * n <= s[-1] + 1e-12
        assert s[0] <= 1.0 + c * n + 1e-12


def test_verify_hard_bound_abs():
    n = 6
    c = 1.0 / (3 * n)
    rep = hard_bounds(c, n, 3, -1.0)[0]
    results = hard_bound_trials([rep], n, c, -1.0, 3, trials=200, master_seed=77)
    _, max_kappa, violations = results[0]
    assert violations == 0
    assert max_kappa <= rep.bound_value + 1e-9


def test_verify_hard_bound_relu_reduces_to_base():
    # with no outer activity the measured kappa obeys the plain residual bound
    n = 6
    c = 1.0 / (3 * n)
    rng = np.random.default_rng(78)
    base = (1.0 + c * n) / (1.0 - c * n)
    for _ in range(50):
        ws = [rng.uniform(-c, c, (n, n))]
        ds = [random_mask(rng, n, int(rng.integers(0, n + 1)), 0.0)]
        check = verify_hard_bound(ws, ds, identity_mask(n, 0.0), hard_bounds(c, n, 0, -1.0)[0])
        assert check.kappa <= base + 1e-9


def test_verify_hard_bound_leaky():
    n = 10
    c = 1.0 / (3 * n)
    reps = {r.name: r for r in hard_bounds(c, n, 1, 0.9)}
    rep = reps["leaky_linear_m"]
    assert rep.applicable
    results = hard_bound_trials([rep], n, c, 0.9, 1, trials=200, master_seed=79)
    _, max_kappa, violations = results[0]
    assert violations == 0
    assert max_kappa <= rep.bound_value + 1e-9
