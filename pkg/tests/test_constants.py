import math

import numpy as np
import pytest

from kirchhoff.constants import (
    KirchhoffParams,
    RegimeReport,
    classify,
    critical_exponent,
    limit_check_d_to_4,
    regime_key,
    sharp_constants,
    sharp_constants_real,
    sobolev_constant,
    unit_ball_volume,
)


def test_unit_ball_volume_closed_forms():
    assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2, rel=1e-14)
    assert unit_ball_volume(6) == pytest.approx(math.pi**3 / 6, rel=1e-14)
    assert unit_ball_volume(5) == pytest.approx(8 * math.pi**2 / 15, rel=1e-14)


def test_unit_ball_volume_monte_carlo_oracle():
    # 4-D hit-or-miss with 1e7 points: agreement to 3 significant digits
    rng = np.random.default_rng(4242)
    hits = 0
    n = 10_000_000
    chunk = 1_000_000
    for _ in range(n // chunk):
        pts = rng.uniform(-1.0, 1.0, size=(chunk, 4))
        hits += int(np.count_nonzero(np.sum(pts**2, axis=1) <= 1.0))
    estimate = 16.0 * hits / n
    assert abs(estimate - unit_ball_volume(4)) / unit_ball_volume(4) < 5e-3


def test_critical_exponent_range():
    for d in range(4, 31):
        ts = critical_exponent(d)
        assert 2.0 < ts <= 4.0
    assert critical_exponent(4) == 4.0
    assert critical_exponent(6) == 3.0


def test_sobolev_constant_closed_forms():
    assert sobolev_constant(4) == pytest.approx(math.pi * math.sqrt(2), rel=1e-14)
    assert sobolev_constant(5) == pytest.approx(3.75 * unit_ball_volume(5) ** 0.4, rel=1e-14)
    assert sobolev_constant(5) == pytest.approx(7.287, rel=1e-3)
    assert sobolev_constant(6) == pytest.approx(6 * unit_ball_volume(6) ** (1 / 3), rel=1e-14)
    assert sobolev_constant(6) == pytest.approx(10.373, rel=1e-3)


def test_sharp_constants_d4_exact():
    c = sharp_constants(4)
    assert c.L_d == pytest.approx(1 / (2 * math.pi**2), rel=1e-13)
    assert c.PS_d == pytest.approx(1 / (2 * math.pi**2), rel=1e-13)
    assert c.C_d == pytest.approx(3 / (2 * math.pi**2), rel=1e-13)
    assert c.L_d == c.PS_d  # exactly, same branch
    assert c.C_d == pytest.approx(3 * c.L_d, rel=1e-15)


def test_sharp_constants_d6_closed_form():
    c = sharp_constants(6)
    expected = 4 * 2 / (36 * sobolev_constant(6) ** 3)
    assert c.L_d == pytest.approx(expected, rel=1e-13)
    assert c.L_d == pytest.approx(1.99e-4, rel=1e-2)


@pytest.mark.parametrize("d", range(4, 31))
def test_threshold_ordering(d):
    c = sharp_constants(d)
    assert 0 < c.L_d <= c.PS_d <= c.C_d


def test_domain_errors():
    with pytest.raises(ValueError):
        unit_ball_volume(3)
    with pytest.raises(ValueError):
        sobolev_constant(3.9)
    with pytest.raises(ValueError):
        sharp_constants(3)
    with pytest.raises(ValueError):
        sharp_constants(4.5)  # real dimensions have their own entry point
    with pytest.raises(ValueError):
        sharp_constants_real(4.0)  # boundary belongs to the d = 4 branch
    with pytest.raises(ValueError):
        KirchhoffParams(a=0.0, b=1.0)
    with pytest.raises(ValueError):
        KirchhoffParams(a=1.0, b=-2.0)


def test_integer_valued_floats_accepted():
    assert sharp_constants(5.0) == sharp_constants(5)


def test_limit_to_d4():
    c4 = sharp_constants(4)
    rows = limit_check_d_to_4([1e-1, 1e-2, 1e-3])
    diffs = [abs(r.L - c4.L_d) for r in rows]
    assert diffs == sorted(diffs, reverse=True)
    ps_row = limit_check_d_to_4([1e-3])[0]
    assert abs(ps_row.PS - c4.PS_d) / c4.PS_d < 0.01
    with pytest.raises(ValueError):
        limit_check_d_to_4([1e-2, 0.0])


def test_classify_examples_d4():
    r = classify(4, KirchhoffParams(1.0, 0.2))
    assert r.swlsc and r.palais_smale and r.convex and r.strictly_convex
    r = classify(4, KirchhoffParams(1.0, 0.1))
    assert r.swlsc and r.palais_smale
    assert not r.convex and not r.strictly_convex
    r = classify(4, KirchhoffParams(1.0, 0.01))
    assert not (r.swlsc or r.palais_smale or r.convex or r.strictly_convex)


def test_classify_boundary_semantics():
    c = sharp_constants(4)
    at_ps = classify(4, KirchhoffParams(1.0, c.PS_d))
    assert at_ps.swlsc  # >= holds at the boundary
    assert not at_ps.palais_smale  # strict > fails at the boundary
    at_c = classify(4, KirchhoffParams(1.0, c.C_d))
    assert at_c.convex and not at_c.strictly_convex


def test_classify_monotone_in_b(rng):
    for _ in range(200):
        d = int(rng.integers(4, 13))
        a = float(rng.uniform(0.1, 5.0))
        b = float(rng.uniform(1e-4, 1.0))
        lo = classify(d, KirchhoffParams(a, b))
        hi = classify(d, KirchhoffParams(a, b * (1.0 + rng.uniform(0.0, 3.0))))
        for flag in ("swlsc", "palais_smale", "convex", "strictly_convex"):
            assert not (getattr(lo, flag) and not getattr(hi, flag))


def test_classify_key_invariance(rng):
    for _ in range(100):
        d = int(rng.integers(5, 13))
        a = float(rng.uniform(0.2, 3.0))
        b = float(rng.uniform(1e-4, 0.5))
        t = float(rng.uniform(0.3, 4.0))
        base = classify(d, KirchhoffParams(a, b))
        scaled = classify(d, KirchhoffParams(t * a, t ** (-(d - 4) / 2.0) * b))
        assert np.isclose(base.key, scaled.key, rtol=1e-12)
        boundary_gap = min(
            abs(base.key - base.thresholds.L_d),
            abs(base.key - base.thresholds.PS_d),
            abs(base.key - base.thresholds.C_d),
        )
        if boundary_gap < 1e-12 * base.key:
            continue  # rounding can legitimately flip exactly at a threshold
        for flag in ("swlsc", "palais_smale", "convex", "strictly_convex"):
            assert getattr(base, flag) == getattr(scaled, flag)


def test_classify_convex_implies_ps_threshold(rng):
    for _ in range(300):
        d = int(rng.integers(4, 15))
        a = float(rng.uniform(0.1, 4.0))
        b = float(10 ** rng.uniform(-5, 0.5))
        r = classify(d, KirchhoffParams(a, b))
        if r.convex:
            assert regime_key(d, KirchhoffParams(a, b)) >= r.thresholds.PS_d
            assert r.palais_smale or r.key == r.thresholds.PS_d


def test_classify_boundary_tol():
    c = sharp_constants(4)
    just_below = KirchhoffParams(1.0, c.C_d * (1 - 1e-9))
    assert not classify(4, just_below).convex
    assert classify(4, just_below, boundary_tol=1e-6).convex
    assert not classify(4, just_below, boundary_tol=1e-6).strictly_convex


def test_regime_report_round_trip():
    r = classify(5, KirchhoffParams(1.3, 0.07))
    assert RegimeReport.from_dict(r.to_dict()) == r


def test_gamma_based_volumes_high_precision():
    # omega_d needs the full Gamma function at half-integer arguments;
    # cross-check against 50-digit arithmetic
    import mpmath

    mpmath.mp.dps = 50
    for d in range(4, 31):
        exact = mpmath.pi ** (d / mpmath.mpf(2)) / mpmath.gamma(d / mpmath.mpf(2) + 1)
        assert abs(unit_ball_volume(d) - float(exact)) <= 1e-13 * float(exact)


@pytest.mark.parametrize("d", [5, 6, 7, 8, 10, 12])
def test_thresholds_are_profile_sign_changes_high_precision(d):
    """50-digit oracle: each threshold is exactly where its profile's
    global minimum crosses zero (a = 1, so the key equals b).

    lsc profile     1/2 + b x^2 / 4 - S^{-2*/2} x^{2*-2} / 2*
    PS profile      1   + b x     - S^{-2*/2} x^{2*/2-1}
    convexity       1   + b x^2   - (2*-1) S^{-2*/2} x^{2*-2}
    """
    import mpmath

    mpmath.mp.dps = 50
    dd = mpmath.mpf(d)
    two_star = 2 * dd / (dd - 2)
    omega = mpmath.pi ** (dd / 2) / mpmath.gamma(dd / 2 + 1)
    S = dd * (dd - 2) / 4 * omega ** (2 / dd)
    c = S ** (-two_star / 2)

    def min_over_positive(fn, hint):
        x_star = mpmath.findroot(
            lambda x: mpmath.diff(fn, x), mpmath.mpf(hint), solver="newton", tol=1e-30
        )
        assert abs(mpmath.im(x_star)) < 1e-30
        return fn(mpmath.re(x_star))

    consts = sharp_constants(d)
    for name, value in (("L", consts.L_d), ("PS", consts.PS_d), ("C", consts.C_d)):
        b_exact = mpmath.mpf(value)

        def profile(x, b=b_exact, which=name):
            if which == "L":
                return mpmath.mpf(1) / 2 + b * x**2 / 4 - c / two_star * x ** (two_star - 2)
            if which == "PS":
                return 1 + b * x - c * x ** (two_star / 2 - 1)
            return 1 + b * x**2 - (two_star - 1) * c * x ** (two_star - 2)

        # locate the stationary point in floats first, refine at 50 digits
        xs = np.geomspace(1e-4, 1e8, 2000)
        hint = xs[np.argmin([float(profile(mpmath.mpf(float(x)))) for x in xs])]

        # at the computed threshold the minimum vanishes to float accuracy
        assert abs(min_over_positive(profile, hint)) < 1e-13
        # and it moves strictly with b on either side
        lo = min_over_positive(
            lambda x: profile(x, b=b_exact * (1 - mpmath.mpf("1e-8"))), hint
        )
        hi = min_over_positive(
            lambda x: profile(x, b=b_exact * (1 + mpmath.mpf("1e-8"))), hint
        )
        assert lo < 0 < hi


def test_real_extension_continuity():
    c4 = sharp_constants(4)
    prev = None
    for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        c = sharp_constants_real(4.0 + eps)
        err = max(
            abs(c.L_d - c4.L_d) / c4.L_d,
            abs(c.PS_d - c4.PS_d) / c4.PS_d,
            abs(c.C_d - c4.C_d) / c4.C_d,
        )
        if prev is not None:
            assert err < prev
        prev = err
    assert prev < 1e-4
