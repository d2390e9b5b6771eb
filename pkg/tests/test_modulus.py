import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osgood.errors import DomainError
from osgood.modulus import (
    FAMILIES,
    SeriesTag,
    Verdict,
    builtin,
    classify_series,
    eval_modulus,
    from_table,
    parse_modulus_spec,
    partial_sum,
    tail_bounds,
    truncate_modulus,
)

ALL_FAMILIES = sorted(FAMILIES)


# -- evaluation ---------------------------------------------------------------

@pytest.mark.parametrize("name, t, expected", [
    ("linear", 3.0, 4.0),
    ("poly2", 1.0, 4.0),
    ("sqrt", 4.0, 3.0),
])
def test_eval_examples(name, t, expected):
    assert eval_modulus(builtin(name), t) == expected


def test_eval_rejects_negative_t():
    with pytest.raises(DomainError):
        eval_modulus(builtin("linear"), -1e-9)


def test_eval_rejects_nonpositive_value():
    bad = from_table([0.0, 1.0], [1.0, 2.0])
    object.__setattr__(bad, "func", lambda t: 0.0 * t)
    with pytest.raises(DomainError):
        eval_modulus(bad, 1.0)


@pytest.mark.parametrize("name", ALL_FAMILIES)
def test_families_positive_and_monotone(name):
    # 1000 random pairs 0 <= s <= t <= 100
    m = builtin(name)
    rng = np.random.default_rng(1)
    pairs = np.sort(rng.uniform(0, 100, size=(1000, 2)), axis=1)
    for s, t in pairs:
        a, b = eval_modulus(m, s), eval_modulus(m, t)
        assert 0 < a <= b


def test_constant_family_parameter():
    m = parse_modulus_spec("family=constant,L=2.5")
    assert eval_modulus(m, 0.0) == eval_modulus(m, 1e6) == 2.5
    assert m.series_tag is SeriesTag.KNOWN_DIVERGENT


def test_power_family_tag_depends_on_exponent():
    assert builtin("power", p=1.5).series_tag is SeriesTag.KNOWN_CONVERGENT
    assert builtin("power", p=1.0).series_tag is SeriesTag.KNOWN_DIVERGENT


def test_unknown_family():
    with pytest.raises(DomainError):
        builtin("nope")


# -- partial sums ---------------------------------------------------------------

def test_partial_sum_poly2():
    # oracle: sum_{k=2}^{11} 1/k^2 with exact rationals
    from fractions import Fraction
    exact = float(sum(Fraction(1, k * k) for k in range(2, 12)))
    assert partial_sum(builtin("poly2"), 10) == pytest.approx(exact, rel=1e-15)
    assert round(exact, 4) == 0.558


def test_partial_sum_constant_one():
    assert partial_sum(builtin("constant", L=1.0), 7) == 7.0


def test_partial_sum_linear():
    assert partial_sum(builtin("linear"), 3) == pytest.approx(1 / 2 + 1 / 3 + 1 / 4, rel=1e-15)


@given(st.integers(min_value=1, max_value=2000), st.sampled_from(ALL_FAMILIES))
@settings(max_examples=60, deadline=None)
def test_partial_sum_increment(N, name):
    m = builtin(name)
    inc = partial_sum(m, N + 1) - partial_sum(m, N)
    assert inc == pytest.approx(1.0 / eval_modulus(m, N + 1), rel=1e-12, abs=4 * N * 2.2e-16)


def test_partial_sum_rejects_zero_N():
    with pytest.raises(DomainError):
        partial_sum(builtin("linear"), 0)


# -- tails ----------------------------------------------------------------------

def test_tail_bounds_poly2():
    lo, up, ok = tail_bounds(builtin("poly2"), 10)
    assert ok
    assert lo == pytest.approx(1 / 12, rel=1e-9)
    assert up == pytest.approx(1 / 11, rel=1e-9)


def test_tail_bounds_divergent_sentinel():
    lo, up, _ = tail_bounds(builtin("constant", L=1.0), 5)
    assert lo == math.inf and up == math.inf


def test_tail_bounds_exp():
    lo, up, _ = tail_bounds(builtin("exp"), 1)
    assert lo == pytest.approx(math.exp(-2), rel=1e-9)
    assert up == pytest.approx(math.exp(-1), rel=1e-9)


@pytest.mark.parametrize("name", [n for n in ALL_FAMILIES
                                  if builtin(n).series_tag is SeriesTag.KNOWN_CONVERGENT])
def test_tail_sandwich(name):
    m = builtin(name)
    N, M = 20, 200_000
    lo, up, _ = tail_bounds(m, N)
    rest = tail_bounds(m, M)
    block = partial_sum(m, M) - partial_sum(m, N)
    assert lo - 1e-9 <= block + rest.lower
    assert block + rest.upper <= up + 1e-9
    assert 0 <= lo <= up


def test_tail_untagged_upper_is_infinite():
    m = builtin("maxsq")
    m = type(m)(m.func, "maxsq-untagged")
    lo, up, _ = tail_bounds(m, 10)
    assert lo == pytest.approx(1 / 11, rel=1e-9)
    assert up == math.inf


# -- classification -------------------------------------------------------------

def test_classify_linear_diverges():
    est = classify_series(builtin("linear"), budget=2 ** 12)
    assert est.verdict is Verdict.DIVERGES
    assert est.consistent


def test_classify_poly2_converges():
    est = classify_series(builtin("poly2"))
    assert est.verdict is Verdict.CONVERGES
    total = est.partial + est.tail_upper
    assert 0.63 <= total <= 0.66
    # oracle: pi^2/6 - 1
    assert total == pytest.approx(math.pi ** 2 / 6 - 1, abs=1e-9)
    assert est.tail_lower <= est.tail_upper


def test_classify_untagged_never_diverges():
    m = builtin("maxsq")
    untagged = type(m)(m.func, "maxsq-untagged")
    est = classify_series(untagged, budget=256)
    assert est.verdict in (Verdict.CONVERGES, Verdict.UNKNOWN)


def test_classify_untagged_divergent_numeric():
    m = builtin("constant", L=1e-3)
    untagged = type(m)(m.func, "tiny-constant")
    est = classify_series(untagged, budget=2 ** 12)
    assert est.verdict is Verdict.DIVERGES


def test_classify_flags_wrong_tag():
    m = builtin("poly2")
    lying = type(m)(m.func, "poly2-mislabelled", SeriesTag.KNOWN_DIVERGENT)
    est = classify_series(lying, budget=2 ** 12)
    assert est.verdict is Verdict.DIVERGES
    assert not est.consistent
    assert "INCONSISTENT" in est.evidence


def test_classify_partials_nondecreasing():
    est = classify_series(builtin("sqrt"), budget=2 ** 14)
    sums = [s for _, s in est.checkpoints]
    assert sums == sorted(sums)


# -- truncation -----------------------------------------------------------------

def test_truncate_examples():
    t_exp = truncate_modulus(builtin("exp"))
    assert eval_modulus(t_exp, 3.0) == 9.0
    assert eval_modulus(t_exp, 0.0) == 1.0
    assert eval_modulus(truncate_modulus(builtin("linear")), 5.0) == 6.0


@pytest.mark.parametrize("name", ALL_FAMILIES)
def test_truncate_idempotent_and_integer_form(name):
    m = builtin(name)
    once = truncate_modulus(m)
    twice = truncate_modulus(once)
    for t in np.linspace(0, 50, 301):
        assert eval_modulus(once, t) == eval_modulus(twice, t)
    for n in range(1, 40):
        assert eval_modulus(once, n) == min(eval_modulus(m, n), n * n)


def test_truncate_spec_option():
    m = parse_modulus_spec("family=exp,truncate=1")
    assert eval_modulus(m, 3.0) == 9.0


# -- tables ---------------------------------------------------------------------

def test_table_interpolates(tmp_path):
    p = tmp_path / "phi.csv"
    p.write_text("t,phi\n# comment\n0,1\n2,3\n4,7\n")
    m = parse_modulus_spec(f"table={p},tag=KnownDivergent")
    assert eval_modulus(m, 1.0) == 2.0
    assert eval_modulus(m, 3.0) == 5.0
    assert eval_modulus(m, 100.0) == 7.0
    assert m.series_tag is SeriesTag.KNOWN_DIVERGENT


def test_table_rejects_decreasing():
    with pytest.raises(DomainError):
        from_table([0, 1, 2], [3, 2, 4])


def test_bad_spec():
    with pytest.raises(DomainError):
        parse_modulus_spec("poly2")
