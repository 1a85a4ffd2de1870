import math

import numpy as np
import pytest

from fellerlab import drifts as D


def test_hardy_eval_reference_points():
    f = D.HardyDrift(a=1.0, d=3)
    np.testing.assert_allclose(f.eval(0.0, np.array([1.0, 0.0, 0.0])), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(
        f.eval(0.0, np.array([0.3, 0.4, 0.0])), [1.2, 1.6, 0.0], rtol=1e-14
    )


def test_hardy_singular_locus_raises():
    f = D.HardyDrift(a=1.0, d=3)
    with pytest.raises(D.DriftDomainError):
        f.eval(0.0, np.zeros(3))
    assert f.magnitude(0.0, np.zeros(3), on_singular="inf") == math.inf


def test_hardy_magnitude_matches_closed_form():
    f = D.HardyDrift(a=0.7, d=4)
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(500, 4))
    mags = f.magnitude(0.0, pts)
    np.testing.assert_allclose(mags, 0.7 / np.linalg.norm(pts, axis=1), rtol=1e-13)
    vals = f.eval(0.0, pts)
    np.testing.assert_allclose(np.linalg.norm(vals, axis=1), mags, rtol=1e-12)


def test_hardy_form_bound():
    assert D.HardyDrift(a=1.0, d=3).known_form_bound().beta == pytest.approx(4.0)
    assert D.HardyDrift(a=1.0, d=5).known_form_bound().beta == pytest.approx(4.0 / 9.0)
    info = D.HardyDrift(a=1.0, d=3).known_form_bound()
    assert info.g is None and info.provenance == "hardy_inequality" and not info.heuristic


def test_hardy_off_center():
    f = D.HardyDrift(a=2.0, d=3, x0=(1.0, 0.0, 0.0))
    np.testing.assert_allclose(f.eval(0.0, np.array([2.0, 0.0, 0.0])), [2.0, 0.0, 0.0])
    assert not f.radial_exact
    with pytest.raises(NotImplementedError):
        f.radial_profile(0.0, np.array([1.0]))


def test_scaling_law_pointwise_and_form_bound():
    rng = np.random.default_rng(11)
    inner = D.HardyDrift(a=1.0, d=3)
    scaled = D.ScaledDrift(scale=0.1, inner=inner)
    pts = rng.normal(size=(1000, 3))
    np.testing.assert_allclose(
        scaled.eval(0.0, pts), 0.1 * inner.eval(0.0, pts), rtol=1e-12, atol=0.0
    )
    assert scaled.known_form_bound().beta == pytest.approx(0.01 * 4.0, rel=1e-12)
    assert scaled.known_form_bound().provenance == "scaling"


def test_split_reduces_to_hardy_when_second_block_empty():
    split = D.SplitDrift(c1=1.0, c2=0.0, n=3, m=0)
    hardy = D.HardyDrift(a=1.0, d=3)
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(200, 3))
    np.testing.assert_allclose(split.eval(0.0, pts), hardy.eval(0.0, pts), rtol=1e-13)
    assert split.known_form_bound().beta == pytest.approx(4.0)


def test_split_six_dimensional_blocks():
    f = D.SplitDrift(c1=1.0, c2=1.0, n=3, m=3)
    x = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    np.testing.assert_allclose(f.eval(0.0, x), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    assert f.known_form_bound().beta == pytest.approx(4.0)
    # radial component is (c1+c2)/r
    np.testing.assert_allclose(f.radial_profile(0.0, np.array([2.0])), [1.0])


def test_split_small_block_has_no_closed_form():
    f = D.SplitDrift(c1=0.5, c2=0.5, n=2, m=1)
    assert f.known_form_bound().beta is None


def test_split_validation():
    with pytest.raises(ValueError):
        D.SplitDrift(c1=1.0, c2=1.0, n=3, m=0)  # nonzero c2 with empty block


def test_annulus_magnitude():
    f = D.AnnulusDrift(c=1.0, delta=0.6, a_exp=0.25, d=3)
    x = np.array([1.5, 0.0, 0.0])
    assert f.magnitude(0.0, x) == pytest.approx(0.5**-0.25, rel=1e-14)
    assert f.magnitude(0.0, np.array([2.5, 0.0, 0.0])) == 0.0
    assert f.magnitude(0.0, np.array([0.1, 0.0, 0.0])) == 0.0
    # direction is the fixed unit diagonal
    v = f.eval(0.0, x)
    np.testing.assert_allclose(v, 0.5**-0.25 / math.sqrt(3.0) * np.ones(3), rtol=1e-13)


def test_annulus_interface_is_singular():
    f = D.AnnulusDrift(c=1.0, delta=0.6, a_exp=0.25, d=3)
    with pytest.raises(D.DriftDomainError):
        f.eval(0.0, np.array([1.0, 0.0, 0.0]))


def test_annulus_validation():
    with pytest.raises(ValueError):
        D.AnnulusDrift(c=1.0, delta=0.6, a_exp=0.6, d=3)
    with pytest.raises(ValueError):
        D.AnnulusDrift(c=1.0, delta=1.2, a_exp=0.25, d=3)


def test_time_log_magnitude_and_g():
    f = D.TimeLogDrift(a2=1.0, t0=0.0, eps=1.0, d=3)
    x = np.zeros(3) + 5.0
    expected = 1.0 / math.log(math.e + 1.0)
    assert f.magnitude(1.0, x) == pytest.approx(expected, rel=1e-14)
    info = f.known_form_bound()
    assert info.beta == 0.0
    assert info.g(1.0) == pytest.approx(expected**2, rel=1e-14)
    assert f.time_dependent


def test_time_log_singular_instant():
    f = D.TimeLogDrift(a2=1.0, t0=0.5, eps=0.5, d=3)
    with pytest.raises(D.DriftDomainError):
        f.eval(0.5, np.ones(3))
    assert f.magnitude(0.5, np.ones(3), on_singular="inf") == math.inf


def test_log_counterexample_eval():
    f = D.LogCounterexampleDrift(kappa=2.0, alpha_exp=1.0, d=3)
    # coefficient 2 kappa alpha (-ln t)^0 = 4, pointing inward
    np.testing.assert_allclose(
        f.eval(0.25, np.array([2.0, 0.0, 0.0])), [-2.0, 0.0, 0.0], rtol=1e-14
    )
    np.testing.assert_allclose(f.radial_profile(0.5, np.array([2.0])), [-2.0])


def test_log_counterexample_alpha_two_coefficient():
    f = D.LogCounterexampleDrift(kappa=2.0, alpha_exp=2.0, d=3)
    t = math.exp(-1.0)
    assert f.magnitude(t, np.array([1.0, 0.0, 0.0])) == pytest.approx(8.0, rel=1e-13)


def test_log_counterexample_time_domain():
    f = D.LogCounterexampleDrift(kappa=2.0, alpha_exp=1.0, d=3)
    for t in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(D.DriftDomainError):
            f.eval(t, np.ones(3))


def test_log_counterexample_form_bound_note():
    info = D.LogCounterexampleDrift(kappa=2.0, alpha_exp=1.0, d=3).known_form_bound()
    assert info.beta is None
    assert "36" in info.note  # 4 d^2/(d-2)^2 at d = 3


def test_ball_field():
    f = D.BallDrift(c=1.0, radius=1.0, d=3)
    assert f.magnitude(0.0, np.array([0.5, 0.0, 0.0])) == pytest.approx(1.0)
    assert f.magnitude(0.0, np.array([1.5, 0.0, 0.0])) == 0.0
    info = f.known_form_bound()
    assert info.beta == 0.0 and info.g(0.0) == 1.0


def test_sum_heuristic_combination():
    f = D.SumDrift(parts=(D.HardyDrift(a=0.1, d=3), D.BallDrift(c=0.5, radius=1.0, d=3)))
    info = f.known_form_bound()
    assert info.beta == pytest.approx(0.04, rel=1e-12)
    assert info.g(0.0) == pytest.approx(0.25, rel=1e-12)
    assert info.heuristic and info.provenance == "sum_heuristic"
    x = np.array([0.5, 0.0, 0.0])
    np.testing.assert_allclose(
        f.eval(0.0, x),
        D.HardyDrift(a=0.1, d=3).eval(0.0, x) + D.BallDrift(c=0.5, radius=1.0, d=3).eval(0.0, x),
    )


def test_sum_with_unknown_part():
    f = D.SumDrift(parts=(D.HardyDrift(a=0.1, d=3),
                          D.LogCounterexampleDrift(kappa=1.0, alpha_exp=1.0, d=3)))
    assert f.known_form_bound().beta is None


def test_zero_drift():
    f = D.ZeroDrift(d=3)
    np.testing.assert_array_equal(f.eval(0.0, np.ones(3)), np.zeros(3))
    assert f.known_form_bound().beta == 0.0


def test_dimension_validation():
    for bad in (2, 1, 3.5):
        with pytest.raises(ValueError):
            D.ZeroDrift(d=bad)
        with pytest.raises(ValueError):
            D.HardyDrift(a=1.0, d=bad)


def test_build_drift_round_and_errors():
    f = D.build_drift({"kind": "hardy", "a": 1.0, "d": 3, "scale": 0.1})
    assert isinstance(f, D.ScaledDrift) and f.scale == 0.1
    g = D.build_drift({"kind": "sum", "parts": [{"kind": "hardy", "a": 0.1, "d": 3},
                                                {"kind": "ball", "c": 0.5, "d": 3}]})
    assert isinstance(g, D.SumDrift)
    with pytest.raises(ValueError):
        D.build_drift({"kind": "vortex"})
    with pytest.raises(ValueError):
        D.build_drift({"kind": "hardy", "a": 1.0, "frequency": 2.0})


def test_explicit_solution_reference_value():
    t = 0.01
    # alpha = 1 collapses exp(-kappa(-ln t)) to t^kappa
    direct = (4.0 * math.pi * t) ** -1.5 * math.exp(-2.0 * (-math.log(t)))
    got = D.explicit_solution(2.0, 1.0, 3, t, 0.0)
    assert got == pytest.approx(direct, rel=1e-13)
    assert got == pytest.approx(2.2446e-3, rel=1e-3)


def test_explicit_solution_profile_and_domain():
    r = np.linspace(0.0, 3.0, 50)
    u = D.explicit_solution(2.0, 1.0, 3, 0.25, r)
    assert np.all(np.diff(u) < 0)
    assert u[0] == pytest.approx(D.supnorm_decay(2.0, 1.0, 3, 0.25), rel=1e-14)
    assert np.all(u <= u[0])
    with pytest.raises(D.DriftDomainError):
        D.explicit_solution(2.0, 1.0, 3, 1.0, r)


def test_explicit_solution_accepts_points():
    x = np.array([[0.3, 0.4, 0.0], [0.0, 0.0, 0.5]])
    u = D.explicit_solution(2.0, 1.0, 3, 0.25, x)
    v = D.explicit_solution(2.0, 1.0, 3, 0.25, np.array([0.5, 0.5]))
    np.testing.assert_allclose(u, v, rtol=1e-14)


def test_supnorm_decay_power_law():
    # alpha = 1: sup norm is (4 pi)^(-d/2) t^(kappa - d/2); slope 0.5 for kappa=2, d=3
    t = np.array([1e-2, 1e-3, 1e-4])
    vals = np.array([D.supnorm_decay(2.0, 1.0, 3, ti) for ti in t])
    slopes = np.diff(np.log(vals)) / np.diff(np.log(t))
    np.testing.assert_allclose(slopes, 0.5, atol=1e-13)
    assert vals[0] == pytest.approx((4.0 * math.pi) ** -1.5 * 0.1, rel=1e-13)


def test_supnorm_decay_vanishes_at_zero():
    ts = 10.0 ** -np.arange(1, 12, dtype=float)
    vals = np.array([D.supnorm_decay(2.0, 1.0, 3, ti) for ti in ts])
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-4
