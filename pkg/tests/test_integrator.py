import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osgood.errors import ConfigError, DomainError, OutOfRangeError
from osgood.fields import (
    ScalarField,
    build_blowup_field,
    build_nonuniqueness_field,
    eval_field,
    linear_field,
    riccati_field,
)
from osgood.integrator import (
    BlowupReport,
    Grid,
    IntegratorConfig,
    Termination,
    Trajectory,
    X_TOL,
    crossings_to_csv,
    detect_level_crossings,
    estimate_blowup,
    hitting_time_zero,
    integrate,
    integrate_logspace,
    reverse_time,
)
from osgood.modulus import builtin

E = math.e
TIGHT = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)


def log_field(rhs, label="log"):
    return ScalarField(lambda x, y: y * rhs(x, math.log(y)), label=label, logspace=rhs)


SQRT_DECAY = log_field(lambda x, u: -(1.0 + math.sqrt(max(-u, 0.0))), "sqrt-decay")
LOG_DECAY = log_field(lambda x, u: u - 1.0, "log-decay")


# -- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"rel_tol": 0.0}, {"abs_tol": -1.0}, {"h_min": 1.0, "h_max": 0.5}, {"y_max": 1.0},
    {"max_steps": 0}, {"h_init": 0.0},
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        IntegratorConfig(**kw)


def test_empty_span():
    with pytest.raises(DomainError):
        integrate(linear_field(1.0), 1.0, (2.0, 2.0))


# -- closed-form solutions -------------------------------------------------------

def test_linear_decay():
    tr = integrate(linear_field(-2.0), 1.0, (0.0, 1.0))
    assert tr.termination is Termination.SPAN_END
    assert tr(1.0) == pytest.approx(math.exp(-2), rel=1e-9)


def test_riccati_tan():
    tr = integrate(riccati_field(), 0.0, (0.0, 1.4))
    assert tr(1.4) == pytest.approx(math.tan(1.4), rel=1e-7)
    assert round(tr(1.4), 4) == 5.7979


def test_sqrt_log_growth():
    f = ScalarField(lambda x, y: y * math.sqrt(1 + math.log(y)))
    tr = integrate(f, 1.0, (0.0, 2.0))
    assert tr(2.0) == pytest.approx(math.exp(3), rel=1e-8)


def test_backward_span():
    tr = integrate(linear_field(-2.0), math.exp(-2), (1.0, 0.0))
    assert tr.direction == -1
    assert tr(0.0) == pytest.approx(1.0, rel=1e-9)
    assert tr(0.5) == pytest.approx(math.exp(-1), rel=1e-9)
    assert np.all(np.diff(tr.x) < 0)


def test_nonautonomous():
    # y' = x y, y(0) = 1 -> exp(x^2 / 2)
    tr = integrate(ScalarField(lambda x, y: x * y), 1.0, (0.0, 2.0))
    assert tr(2.0) == pytest.approx(math.exp(2.0), rel=1e-9)


def test_logspace_linear_decay():
    tr = integrate_logspace(LOG_DECAY, 0.0, (0.0, 1.0), TIGHT)
    assert tr(1.0) == pytest.approx(1 - E, rel=1e-10)


def test_logspace_sqrt_crossing():
    tr = integrate_logspace(SQRT_DECAY, 0.0, (0.0, 3.0), TIGHT)
    rec = detect_level_crossings(tr, [4], Grid.DECAY)[0]
    assert rec.x_first == pytest.approx(2 * (2 - math.log(3)), abs=1e-8)
    assert round(rec.x_first, 4) == 1.8028


def test_logspace_blowup_breakpoint_slopes():
    m = builtin("poly2")
    f = build_blowup_field(m)
    tr = integrate_logspace(f, 0.0, (0.0, 10.0), IntegratorConfig(y_max=math.exp(30)))
    assert tr.termination is Termination.BLOW_UP
    assert np.all(np.diff(tr.y) > 0)
    # steps are capped at the kinks; the cap is located on the step's interpolant,
    # so nodes land on integer u up to the interpolation error
    for n in range(1, 30):
        i = int(np.argmin(np.abs(tr.y - n)))
        assert abs(tr.y[i] - n) < 1e-7
        assert f.eval_logspace(float(n)) == m(float(n))


def test_config_logspace_flag():
    tr = integrate(LOG_DECAY, 1.0, (0.0, 1.0), replace(TIGHT, logspace=True))
    assert tr.logspace
    assert tr.value(1.0) == pytest.approx(math.exp(1 - E), rel=1e-9)


# -- trajectory invariants -------------------------------------------------------

def test_nodes_and_slopes_consistent():
    f = riccati_field()
    cfg = IntegratorConfig()
    tr = integrate(f, 0.0, (0.0, 1.2), cfg)
    assert np.all(np.diff(tr.x) > 0)
    for x, y, s in zip(tr.x, tr.y, tr.slope):
        assert tr(x) == pytest.approx(y, abs=4 * (cfg.abs_tol + cfg.rel_tol * abs(y)))
        assert s == eval_field(f, x, y)


def test_dense_output_vs_reintegration():
    f = riccati_field()
    cfg = IntegratorConfig()
    tr = integrate(f, 0.0, (0.0, 1.3), cfg)
    rng = np.random.default_rng(5)
    for i in range(0, len(tr.h), max(1, len(tr.h) // 8)):
        x0, x1 = tr.x[i], tr.x[i + 1]
        for x in rng.uniform(x0, x1, 10):
            if x <= x0:
                continue
            ref = integrate(f, tr.y[i], (x0, x), TIGHT)(x)
            tol = 10 * (cfg.abs_tol + cfg.rel_tol * abs(ref))
            assert abs(tr(x) - ref) <= tol


def test_order_of_accuracy():
    f = linear_field(-2.0)
    for rt in (1e-7, 1e-9):
        e1 = abs(integrate(f, 1.0, (0, 1), IntegratorConfig(rel_tol=rt, abs_tol=rt / 100))(1)
                 - math.exp(-2))
        e2 = abs(integrate(f, 1.0, (0, 1), IntegratorConfig(rel_tol=rt / 16, abs_tol=rt / 1600))(1)
                 - math.exp(-2))
        assert e1 / e2 >= 8


def test_out_of_range():
    tr = integrate(linear_field(1.0), 1.0, (0.0, 1.0))
    with pytest.raises(OutOfRangeError):
        tr(1.5)


# -- terminations ----------------------------------------------------------------

def test_blowup_termination():
    cfg = IntegratorConfig(y_max=1e6)
    tr = integrate(riccati_field(), 0.0, (0.0, 3.0), cfg)
    assert tr.termination is Termination.BLOW_UP
    assert abs(tr.y[-1]) >= cfg.y_max * (1 - 1e-9)
    assert tr.x[-1] == pytest.approx(math.atan(1e6), abs=1e-9)


def test_hit_zero_termination():
    # y' = -1, y(0) = 1 reaches 0 at x = 1
    tr = integrate(ScalarField(lambda x, y: -1.0), 1.0, (0.0, 5.0))
    assert tr.termination is Termination.HIT_ZERO
    assert tr.x[-1] == pytest.approx(1.0, abs=1e-12)


def test_no_false_hit_zero():
    tr = integrate(linear_field(-1.0), 1.0, (0.0, 20.0))
    assert tr.termination is Termination.SPAN_END
    assert tr.y[-1] > 0


def test_step_failure():
    tr = integrate(ScalarField(lambda x, y: 1.0 / (1.0 - x) ** 2), 0.0, (0.0, 2.0),
                   IntegratorConfig(max_steps=50, y_max=1e300))
    assert tr.termination is Termination.STEP_FAILURE


def test_max_steps_message():
    tr = integrate(linear_field(-1.0), 1.0, (0.0, 1000.0), IntegratorConfig(max_steps=3))
    assert tr.termination is Termination.STEP_FAILURE
    assert "max_steps" in tr.message


# -- export / import -------------------------------------------------------------

def test_csv_roundtrip():
    tr = integrate(riccati_field(), 0.0, (0.0, 1.0))
    text = tr.to_csv()
    assert text.splitlines()[0] == "x,y,slope"
    back = Trajectory.from_csv(text)
    np.testing.assert_array_equal(back.x, tr.x)
    np.testing.assert_array_equal(back.y, tr.y)
    # cubic Hermite rebuild is good to about the step error
    for x in np.linspace(0, 1, 17):
        assert back(x) == pytest.approx(math.tan(x), rel=1e-6, abs=1e-9)


def test_csv_logspace_header():
    tr = integrate_logspace(LOG_DECAY, 0.0, (0.0, 1.0))
    assert tr.to_csv().startswith("x,u,slope")
    assert Trajectory.from_csv(tr.to_csv()).logspace


def test_json_roundtrip_exact():
    tr = integrate(riccati_field(), 0.0, (0.0, 1.0))
    d = json.loads(tr.to_json())
    assert d["schema"] == "osgood-trajectory/1"
    back = Trajectory.from_json(tr.to_json())
    for x in np.linspace(0, 1, 23):
        assert back(x) == tr(x)
    assert back.termination is tr.termination


def test_csv_rejects_garbage():
    with pytest.raises(ConfigError):
        Trajectory.from_csv("a,b\n1,2\n")


# -- level crossings --------------------------------------------------------------

def test_monotone_first_equals_last():
    tr = integrate_logspace(LOG_DECAY, 0.0, (0.0, 6.0), TIGHT)
    recs = detect_level_crossings(tr, range(1, 200), Grid.DECAY)
    assert recs
    for r in recs:
        assert r.x_first == r.x_last_before_next
        assert not r.flagged


def test_log_decay_crossing_times():
    tr = integrate_logspace(LOG_DECAY, 0.0, (0.0, 6.0), TIGHT)
    recs = {r.n: r for r in detect_level_crossings(tr, range(1, 200), Grid.DECAY)}
    assert recs[3].x_first == pytest.approx(math.log(4), abs=1e-10)
    for n, r in recs.items():
        assert abs(r.x_first - math.log(n + 1)) <= 1e-8 * max(1, r.x_first)


def test_sqrt_decay_crossing_times():
    tr = integrate_logspace(SQRT_DECAY, 0.0, (0.0, 40.0))
    recs = {r.n: r for r in detect_level_crossings(tr, range(1, 201), Grid.DECAY)}
    assert len(recs) == 200
    assert recs[100].x_first == pytest.approx(15.204, abs=5e-4)
    for n, r in recs.items():
        oracle = 2 * (math.sqrt(n) - math.log1p(math.sqrt(n)))
        assert abs(r.x_first - oracle) <= 1e-8 * max(1, oracle)


def test_crossings_levels_and_values():
    tr = integrate(linear_field(-1.0), 1.0, (0.0, 8.0), TIGHT)
    recs = detect_level_crossings(tr, range(0, 10), Grid.DECAY)
    assert [r.n for r in recs] == list(range(0, 8))
    for r in recs:
        assert r.level == math.exp(-r.n)
        assert r.x_first <= r.x_last_before_next
        assert tr(r.x_first) == pytest.approx(r.level, rel=1e-9)


def test_growth_grid():
    tr = integrate_logspace(log_field(lambda x, u: 1.0), 0.0, (0.0, 5.0))
    recs = detect_level_crossings(tr, range(0, 6), "Growth")
    for r in recs:
        assert r.x_first == pytest.approx(r.n, abs=1e-11)


def test_absent_levels_skipped():
    tr = integrate(linear_field(-1.0), 1.0, (0.0, 2.0))
    recs = detect_level_crossings(tr, range(0, 50), Grid.DECAY)
    assert max(r.n for r in recs) == 1


def test_nonmonotone_first_and_last():
    # y = 0.5 + 0.3 sin(x) stays in [0.2, 0.8]: crosses e^-1 repeatedly, never e^-2
    f = ScalarField(lambda x, y: 0.3 * math.cos(x))
    tr = integrate(f, 0.5, (0.0, 20.0), TIGHT)
    recs = detect_level_crossings(tr, [1, 2], Grid.DECAY)
    assert [r.n for r in recs] == [1]
    r = recs[0]
    s = math.asin((math.exp(-1) - 0.5) / 0.3)
    roots = sorted([math.pi - s + 2 * math.pi * k for k in range(4)]
                   + [2 * math.pi + s + 2 * math.pi * k for k in range(4)])
    roots = [x for x in roots if x <= 20.0]
    assert r.x_first == pytest.approx(roots[0], abs=1e-9)
    assert r.x_last_before_next == pytest.approx(roots[-1], abs=1e-9)
    assert r.n_roots == len(roots)


def test_last_crossing_stops_at_next_level():
    # y = 0.5 + 0.4 sin(x) dips below e^-2, so x_1^+ must precede x_2
    f = ScalarField(lambda x, y: 0.4 * math.cos(x))
    tr = integrate(f, 0.5, (0.0, 20.0), TIGHT)
    r1, r2 = detect_level_crossings(tr, [1, 2], Grid.DECAY)
    assert r1.x_first <= r1.x_last_before_next <= r2.x_first
    assert tr(r1.x_last_before_next) == pytest.approx(math.exp(-1), abs=1e-9)


def test_crossings_idempotent():
    tr = integrate_logspace(SQRT_DECAY, 0.0, (0.0, 20.0))
    a = detect_level_crossings(tr, range(1, 60))
    b = detect_level_crossings(tr, range(1, 60))
    assert a == b
    assert crossings_to_csv(a) == crossings_to_csv(b)
    assert crossings_to_csv(a).splitlines()[0] == "n,level,x_first,x_last"


# -- blow-up ---------------------------------------------------------------------

def test_blowup_poly2_bracket():
    m = builtin("poly2")
    rep = estimate_blowup(build_blowup_field(m), m, 0.0)
    assert isinstance(rep, BlowupReport)
    lo, hi = rep.x_infinity_bracket
    assert lo <= hi <= 1 + math.pi ** 2 / 3
    assert rep.finite and not rep.budget_exceeded
    assert rep.gaps_ok
    for n, gap, bound in rep.gaps:
        assert gap <= 2 / m(float(n)) + 1e-9


def test_blowup_riccati_time():
    rep = estimate_blowup(riccati_field(), None, 0.0, IntegratorConfig(y_max=1e12))
    assert rep.x_reach == pytest.approx(math.pi / 2, abs=1e-3)
    assert rep.termination is Termination.BLOW_UP


def test_blowup_divergent_has_no_finite_bracket():
    m = builtin("linear")
    rep = estimate_blowup(build_blowup_field(m), m, 0.0, IntegratorConfig(y_max=1e8))
    assert rep.x_infinity_bracket[1] == math.inf
    assert not rep.finite


def test_blowup_budget():
    m = builtin("poly2")
    rep = estimate_blowup(build_blowup_field(m), m, 0.0, IntegratorConfig(max_steps=20))
    assert rep.budget_exceeded


def test_blowup_exp_resolution_limited():
    m = builtin("exp")
    rep = estimate_blowup(build_blowup_field(m), m, 0.0)
    assert rep.finite and rep.gaps_ok
    lo, hi = rep.x_infinity_bracket
    assert lo <= hi < lo + 1e-5


def test_blowup_requires_blowup_field():
    m = builtin("poly2")
    with pytest.raises(DomainError):
        estimate_blowup(build_nonuniqueness_field(m), m, 0.0)


# -- collapse ----------------------------------------------------------------------

def test_collapse_poly2_bracket():
    m = builtin("poly2")
    rep = hitting_time_zero(build_nonuniqueness_field(m), m, math.exp(-1))
    lo, hi = rep.x_infinity_bracket
    assert rep.finite and lo <= hi < math.inf
    assert rep.termination is Termination.HIT_ZERO


def test_collapse_poly2_upper_gap_bound():
    # x_{n+1} - x_n <= (e-1)/phi(n) presumes F increasing on each cell, which
    # fails at n = 1 for this modulus: phi(1) = 4 phi(0) > e phi(0).  Kept red.
    m = builtin("poly2")
    rep = hitting_time_zero(build_nonuniqueness_field(m), m, math.exp(-1))
    bad = [(n, g, b) for n, g, b in rep.gaps if g > b + 1e-9]
    assert not bad, f"gaps above (e-1)/phi(n): {bad}"


def test_collapse_poly2_cellwise_gap_bound():
    m = builtin("poly2")
    rep = hitting_time_zero(build_nonuniqueness_field(m), m, math.exp(-1))
    assert rep.cell_gaps_ok
    assert all(g <= b + 1e-9 for n, g, b in rep.gaps if n >= 2)


def test_collapse_linear_persists():
    m = builtin("linear")
    rep = hitting_time_zero(build_nonuniqueness_field(m), m, 1.0, n_max=200,
                            floor=lambda n: 0.5 * math.log(n + 1), floor_range=(4, 200))
    assert rep.x_infinity_bracket[1] == math.inf
    assert rep.floor_ok and len(rep.floor_checks) == 197
    assert rep.lower_gaps_ok
    for n, gap, bound in rep.lower_gaps:
        assert gap >= 1 / (2 * m(float(n + 1))) - 1e-9


def test_collapse_constant_modulus():
    # decay from 1 spends (e-1)/L on the constant part above 1/e, then 1/L per level
    L = 3.0
    m = builtin("constant", L=L)
    rep = hitting_time_zero(build_nonuniqueness_field(m), m, 1.0, n_max=60)
    xs = {r.n: r.x_first for r in rep.crossings}
    for n in range(1, 60):
        assert xs[n] == pytest.approx((E - 1) / L + (n - 1) / L, abs=1e-8)
    for n in range(1, 59):
        assert xs[n + 1] - xs[n] == pytest.approx(1 / L, abs=1e-8)


def test_collapse_rejects_bad_y0():
    m = builtin("poly2")
    with pytest.raises(DomainError):
        hitting_time_zero(build_nonuniqueness_field(m), m, 2.0)


@pytest.mark.parametrize("name", ["poly2", "maxsq", "exp", "power"])
def test_collapse_convergent_families_finite(name):
    m = builtin(name)
    rep = hitting_time_zero(build_nonuniqueness_field(m), m, math.exp(-1))
    assert rep.finite
    assert rep.cell_gaps_ok


@pytest.mark.parametrize("name", ["linear", "sqrt", "tlogt"])
def test_collapse_divergent_lower_gaps(name):
    m = builtin(name)
    rep = hitting_time_zero(build_nonuniqueness_field(m), m, 1.0, n_max=150)
    assert not rep.finite
    assert rep.lower_gaps_ok and rep.floor_ok


def test_report_json_schema():
    m = builtin("poly2")
    d = estimate_blowup(build_blowup_field(m), m, 0.0).to_dict()
    assert d["schema"] == "osgood-report/1"
    json.dumps(d)


# -- time reversal ---------------------------------------------------------------

def test_reverse_sign_flip():
    m = builtin("poly2")
    dec = build_nonuniqueness_field(m).with_sign(-1)
    rev = reverse_time(dec)
    for y in (0.01, 0.1, 0.3):
        assert rev(0.0, y) == -dec(0.0, y) > 0


def test_reverse_involution():
    f = ScalarField(lambda x, y: math.sin(x) * y + x ** 2)
    back = reverse_time(reverse_time(f))
    rng = np.random.default_rng(2)
    for x, y in rng.uniform(-3, 3, (100, 2)):
        assert back(x, y) == f(x, y)


def test_reverse_retraces_backward_run():
    f = ScalarField(lambda x, y: math.cos(x) - 0.3 * y)
    fwd = integrate(f, 1.0, (0.0, 2.0), TIGHT)
    back = integrate(reverse_time(f), fwd(2.0), (-2.0, 0.0), TIGHT)
    assert back(0.0) == pytest.approx(1.0, rel=1e-9)


def test_reverse_nonuniq_gap_symmetry():
    # integration error must sit below event tolerance, hence the tight config
    m = builtin("poly2")
    dec = build_nonuniqueness_field(m).with_sign(-1)
    up = integrate_logspace(reverse_time(dec), -10.0, (0.0, 5.0), TIGHT)
    rise = {r.n: r.x_first for r in detect_level_crossings(up, [-10, -9], Grid.GROWTH)}
    assert np.all(np.diff(up.y) > 0)
    down = integrate_logspace(dec, -9.0, (0.0, 5.0), replace(TIGHT, u_floor=-11.0))
    fall = {r.n: r.x_first for r in detect_level_crossings(down, [9, 10], Grid.DECAY)}
    gap_up = rise[-9] - rise[-10]
    gap_down = fall[10] - fall[9]
    assert abs(gap_up - gap_down) <= 2 * X_TOL * max(1.0, gap_up)


@given(st.floats(min_value=0.1, max_value=5.0))
@settings(max_examples=20, deadline=None)
def test_linear_decay_property(L):
    tr = integrate(linear_field(-L), 1.0, (0.0, 2.0))
    assert tr(2.0) == pytest.approx(math.exp(-2 * L), rel=1e-8)
