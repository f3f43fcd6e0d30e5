"""Discrete edge distributions: support, temperature softmax, expectation
decoding, KL divergence, and interpolation targets."""

import math

import numpy as np
import pytest

from boxdistill.distributions import (
    BoxDistribution,
    EdgeSupport,
    decode_bbox,
    default_support,
    expect,
    kl_divergence,
    project_target,
    softmax_with_temperature,
)
from boxdistill.geometry import AnchorPoint


# ----------------------------------------------------------------------
# Support construction.


def test_default_support_unit_spacing():
    s = default_support()
    assert s.e_min == 0.0 and s.e_max == 16.0 and s.n == 17
    assert s.delta == 1.0
    assert np.array_equal(s.positions, np.arange(17.0))


def test_minimal_support():
    s = EdgeSupport(0.0, 1.0, 2)
    assert list(s.positions) == [0.0, 1.0]


def test_symmetric_support():
    s = EdgeSupport(-2.0, 2.0, 5)
    assert list(s.positions) == [-2.0, -1.0, 0.0, 1.0, 2.0]


def test_support_rejects_bad_arguments():
    with pytest.raises(ValueError):
        EdgeSupport(0.0, 16.0, 1)
    with pytest.raises(ValueError):
        EdgeSupport(3.0, 3.0, 5)
    with pytest.raises(ValueError):
        EdgeSupport(5.0, 1.0, 4)


def test_support_equality_and_hash():
    assert EdgeSupport(0, 16, 17) == EdgeSupport(0.0, 16.0, 17)
    assert hash(EdgeSupport(0, 16, 17)) == hash(EdgeSupport(0.0, 16.0, 17))
    assert EdgeSupport(0, 16, 17) != EdgeSupport(0, 16, 9)


def test_support_positions_read_only():
    s = default_support()
    with pytest.raises(ValueError):
        s.positions[0] = 5.0


# ----------------------------------------------------------------------
# Temperature softmax.


def test_softmax_symmetry():
    assert np.allclose(softmax_with_temperature(np.array([0.0, 0.0]), 1.0), [0.5, 0.5])


def test_softmax_known_value():
    p = softmax_with_temperature(np.array([2.0, 0.0]), 2.0)
    e = math.e
    assert p == pytest.approx([e / (e + 1), 1 / (e + 1)], abs=1e-12)
    assert p == pytest.approx([0.73106, 0.26894], abs=1e-5)


def test_softmax_uniform_limit():
    z = np.array([3.0, -1.0, 0.5, 2.0])
    p = softmax_with_temperature(z, 1e6)
    assert np.max(np.abs(p - 0.25)) < 1e-3


def test_softmax_dirac_limit():
    z = np.array([3.0, -1.0, 0.5, 2.0])
    p = softmax_with_temperature(z, 1e-3)
    assert p[np.argmax(z)] > 0.999


def test_softmax_normalized_and_positive():
    rng = np.random.default_rng(0)
    for _ in range(200):
        z = rng.normal(scale=5, size=rng.integers(2, 20))
        tau = float(rng.uniform(0.05, 50))
        p = softmax_with_temperature(z, tau)
        assert abs(p.sum() - 1.0) < 1e-9
        assert np.all(p > 0)


def test_softmax_argmax_invariant_under_temperature():
    rng = np.random.default_rng(1)
    z = rng.normal(size=9)
    for tau in (0.01, 0.5, 1.0, 10.0, 1e4):
        assert np.argmax(softmax_with_temperature(z, tau)) == np.argmax(z)


def test_softmax_overflow_safe():
    p = softmax_with_temperature(np.array([1e4, 0.0]), 1.0)
    assert np.isfinite(p).all()
    assert p[0] == pytest.approx(1.0)


def test_softmax_rejects_bad_inputs():
    with pytest.raises(ValueError):
        softmax_with_temperature(np.array([1.0, 2.0]), 0.0)
    with pytest.raises(ValueError):
        softmax_with_temperature(np.array([1.0, 2.0]), -3.0)
    with pytest.raises(ValueError):
        softmax_with_temperature(np.array([1.0, math.inf]), 1.0)


# ----------------------------------------------------------------------
# Expectation decoding.


def test_expect_dirac():
    s = EdgeSupport(0.0, 3.0, 4)
    assert expect(s, np.array([0.0, 0.0, 1.0, 0.0])) == 2.0


def test_expect_uniform_midpoint():
    s = EdgeSupport(0.0, 3.0, 4)
    assert expect(s, np.full(4, 0.25)) == pytest.approx(1.5, abs=1e-12)


def test_expect_dot_product():
    s = EdgeSupport(0.0, 4.0, 3)  # positions 0, 2, 4
    assert expect(s, np.array([0.25, 0.0, 0.75])) == pytest.approx(3.0, abs=1e-12)


def test_expect_within_support_bounds():
    rng = np.random.default_rng(2)
    s = default_support()
    for _ in range(100):
        p = rng.dirichlet(np.ones(s.n))
        value = expect(s, p)
        assert s.e_min <= value <= s.e_max


def test_expect_linear_in_p():
    rng = np.random.default_rng(3)
    s = default_support()
    p, q = rng.dirichlet(np.ones(s.n)), rng.dirichlet(np.ones(s.n))
    mix = 0.3 * p + 0.7 * q
    assert expect(s, mix) == pytest.approx(0.3 * expect(s, p) + 0.7 * expect(s, q), abs=1e-12)


def test_expect_rejects_mismatched_length():
    with pytest.raises(ValueError):
        expect(default_support(), np.full(5, 0.2))


# ----------------------------------------------------------------------
# KL divergence.


def test_kl_identity_is_zero():
    rng = np.random.default_rng(4)
    for _ in range(20):
        p = rng.dirichlet(np.ones(8))
        assert kl_divergence(p, p) < 1e-12


def test_kl_known_values():
    assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(
        math.log(2), abs=1e-9
    )
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert kl_divergence(np.array([0.5, 0.5]), np.array([0.25, 0.75])) == pytest.approx(
        expected, abs=1e-12
    )
    assert expected == pytest.approx(0.143841, abs=1e-6)


def test_kl_non_negative_random_pairs():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        p = rng.dirichlet(np.ones(n))
        q = rng.dirichlet(np.ones(n))
        assert kl_divergence(p, q) >= 0.0


def test_kl_zero_times_log_zero():
    # p has a zero where q does not: that term contributes nothing
    value = kl_divergence(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    assert value == pytest.approx(math.log(2), abs=1e-9)


def test_kl_clamps_zero_reference():
    # q=0 where p>0 stays finite through the epsilon clamp
    value = kl_divergence(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert math.isfinite(value)
    assert value > 20.0  # ~log(1/1e-12)


def test_kl_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.25, 0.25]))


# ----------------------------------------------------------------------
# Target projection.


def test_project_target_interior():
    proj = project_target(2.3, default_support())
    assert proj.index == 2
    assert proj.w_left == pytest.approx(0.7, abs=1e-12)
    assert proj.w_right == pytest.approx(0.3, abs=1e-12)
    assert not proj.clamped


def test_project_target_on_grid():
    proj = project_target(5.0, default_support())
    assert proj.index == 5
    assert (proj.w_left, proj.w_right) == (1.0, 0.0)


def test_project_target_clamps_above():
    s = default_support()
    proj = project_target(99.0, s)
    assert proj.clamped
    assert proj.index == s.n - 2
    assert (proj.w_left, proj.w_right) == (0.0, 1.0)


def test_project_target_clamps_below():
    proj = project_target(-3.0, default_support())
    assert proj.clamped
    assert proj.index == 0
    assert (proj.w_left, proj.w_right) == (1.0, 0.0)


def test_project_target_reconstruction():
    rng = np.random.default_rng(6)
    s = default_support()
    for _ in range(300):
        y = float(rng.uniform(s.e_min, s.e_max))
        proj = project_target(y, s)
        rebuilt = proj.w_left * s.positions[proj.index] + proj.w_right * s.positions[proj.index + 1]
        assert abs(rebuilt - y) < 1e-12
        assert abs(proj.w_left + proj.w_right - 1.0) < 1e-12


def test_project_target_rejects_non_finite():
    with pytest.raises(ValueError):
        project_target(math.nan, default_support())


# ----------------------------------------------------------------------
# Box distributions.


def test_box_distribution_shape_check():
    s = default_support()
    with pytest.raises(ValueError):
        BoxDistribution(np.zeros((3, s.n)), s)
    with pytest.raises(ValueError):
        BoxDistribution(np.zeros((4, s.n + 1)), s)


def test_box_distribution_probabilities_normalized():
    rng = np.random.default_rng(7)
    s = default_support()
    bd = BoxDistribution(rng.normal(size=(4, s.n)), s)
    p = bd.probabilities(tau=10.0)
    assert p.shape == (4, s.n)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_decode_bbox_dirac_case():
    s = default_support()
    logits = np.full((4, s.n), -30.0)
    for row, offset in enumerate((1, 2, 3, 4)):  # t, b, l, r
        logits[row, offset] = 30.0
    box = decode_bbox(BoxDistribution(logits, s), AnchorPoint(5, 5))
    assert box.corners() == pytest.approx((2.0, 4.0, 9.0, 7.0), abs=1e-9)


def test_decode_bbox_uniform_case():
    s = EdgeSupport(0.0, 2.0, 3)
    box = decode_bbox(BoxDistribution(np.zeros((4, 3)), s), AnchorPoint(4, 4))
    assert box.corners() == pytest.approx((3.0, 3.0, 5.0, 5.0), abs=1e-12)


def test_decode_bbox_matches_per_edge_expectation():
    rng = np.random.default_rng(8)
    s = default_support()
    for _ in range(25):
        logits = rng.normal(size=(4, s.n))
        tau = float(rng.uniform(0.5, 20))
        box = decode_bbox(BoxDistribution(logits, s), AnchorPoint(10, 12), tau=tau)
        t, b, l, r = (
            expect(s, softmax_with_temperature(logits[i], tau)) for i in range(4)
        )
        assert box.corners() == pytest.approx((10 - l, 12 - t, 10 + r, 12 + b), abs=1e-12)


def test_decode_bbox_carries_score_and_class():
    s = default_support()
    box = decode_bbox(
        BoxDistribution(np.zeros((4, s.n)), s), AnchorPoint(20, 20), score=0.5, class_id=1
    )
    assert box.score == 0.5
    assert box.class_id == 1
