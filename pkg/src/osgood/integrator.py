"""Adaptive Dormand-Prince 5(4) integration with dense output and events.

Scalar only.  Solutions are advanced either in ``y`` directly or in
``u = log y``, where ``y' = F(y)`` becomes ``u' = F(e^u)/e^u``; the latter
lets a run cross hundreds of decades without overflow or denormals.  When the
field has kinks (the piecewise log-linear constructions) every step that would
cross one is shortened to end on it, so the error control never straddles a
breakpoint.

Terminal events: ``|y| >= y_max`` (``BlowUp``), sign change through 0 or
``u <= u_floor`` (``HitZero``).  Crossing times of the levels ``e^{+-n}`` are
located afterwards on the dense output.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, OutOfRangeError
from .fields import PiecewiseLogLinearField, ScalarField
from .modulus import Modulus, SeriesTag, partial_sum, tail_bounds

__all__ = [
    "Termination",
    "Grid",
    "IntegratorConfig",
    "Trajectory",
    "CrossingRecord",
    "BlowupReport",
    "integrate",
    "integrate_logspace",
    "detect_level_crossings",
    "estimate_blowup",
    "hitting_time_zero",
    "reverse_time",
    "crossings_to_csv",
]

# Dormand-Prince 5(4), Hairer-Norsett-Wanner I, p. 178
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6] + (0.0,)
# 5th minus 4th order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# quartic continuous extension (Shampine); row i multiplies stage i
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])
_P_ROWS = tuple(tuple(float(v) for v in row) for row in _P)

ORDER = 5
#: event tolerance in x, relative to max(1, |x|)
X_TOL = 1e-12
#: crossings inside one bracket window beyond which a record is flagged as dense
DENSITY_FLAG = 32
#: refinements of a step shortened to end on a kink, and the landing tolerance
MAX_CAPS = 3
KINK_TOL = 1e-12
#: allowance on the proof's gap inequalities
GAP_TOL = 1e-9


class Termination(str, Enum):
    SPAN_END = "SpanEnd"
    BLOW_UP = "BlowUp"
    HIT_ZERO = "HitZero"
    STEP_FAILURE = "StepFailure"


class Grid(str, Enum):
    DECAY = "Decay"
    GROWTH = "Growth"


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    h_init: float | None = None
    h_min: float = 1e-15
    h_max: float = math.inf
    y_max: float = 1e15
    logspace: bool = False
    max_steps: int = 200_000
    #: log-space stand-in for zero; reaching it ends the run with HitZero
    u_floor: float = -700.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("rel_tol and abs_tol must be positive")
        if not 0 < self.h_min <= self.h_max:
            raise ConfigError("need 0 < h_min <= h_max")
        if self.h_init is not None and not self.h_init > 0:
            raise ConfigError("h_init must be positive")
        if not self.y_max > 1:
            raise ConfigError("y_max must exceed 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if not self.u_floor < 0:
            raise ConfigError("u_floor must be negative")


# ---------------------------------------------------------------------------
# trajectory container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Accepted nodes plus one dense polynomial per step.

    ``x`` runs in the integration direction.  Between ``x[i]`` and
    ``x[i+1]`` the state is ``y[i] + h[i] * sum_j coeffs[i, j] * th^(j+1)``
    with ``th = (t - t[i]) / h[i]`` in internal time ``t = direction * x``.
    In log space the state column holds ``u``.
    """

    x: np.ndarray
    y: np.ndarray
    slope: np.ndarray
    h: np.ndarray
    coeffs: np.ndarray
    termination: Termination
    direction: int = 1
    logspace: bool = False
    label: str = ""
    message: str = ""

    @property
    def span(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    @property
    def state_name(self) -> str:
        return "u" if self.logspace else "y"

    def __len__(self) -> int:
        return len(self.x)

    def _t(self) -> np.ndarray:
        return self.direction * self.x

    def _segment(self, t: float) -> int:
        ts = self._t()
        slack = X_TOL * max(1.0, abs(t))
        if t < ts[0] - slack or t > ts[-1] + slack:
            raise OutOfRangeError(f"x={self.direction * t!r} outside trajectory span {self.span}")
        i = int(np.searchsorted(ts, t, side="right")) - 1
        return min(max(i, 0), len(self.h) - 1)

    def _poly(self, i: int, t: float) -> float:
        th = (t - self.direction * self.x[i]) / self.h[i]
        q1, q2, q3, q4 = self.coeffs[i]
        return float(self.y[i] + self.h[i] * (((q4 * th + q3) * th + q2) * th + q1) * th)

    def __call__(self, x: float) -> float:
        """State (``y`` or ``u``) at ``x`` from the dense output."""
        if len(self.h) == 0:
            if x == self.x[0]:
                return float(self.y[0])
            raise OutOfRangeError("empty trajectory")
        t = self.direction * x
        return self._poly(self._segment(t), t)

    def value(self, x: float) -> float:
        """Solution ``y(x)``; exponentiates in log space."""
        s = self(x)
        return math.exp(s) if self.logspace else s

    # -- export / import -----------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", self.state_name, "slope"])
        for a, b, c in zip(self.x, self.y, self.slope):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema": "osgood-trajectory/1",
            "label": self.label,
            "termination": self.termination.value,
            "direction": self.direction,
            "logspace": self.logspace,
            "message": self.message,
            "nodes": [[float(a), float(b), float(c)] for a, b, c in zip(self.x, self.y, self.slope)],
            "dense": {"h": [float(v) for v in self.h],
                      "coeffs": [[float(v) for v in row] for row in self.coeffs]},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> Trajectory:
        nodes = np.asarray(d["nodes"], dtype=float).reshape(-1, 3)
        dense = d.get("dense")
        direction = int(d.get("direction", 1))
        if dense:
            h = np.asarray(dense["h"], dtype=float)
            coeffs = np.asarray(dense["coeffs"], dtype=float).reshape(-1, 4)
        else:
            h, coeffs = _hermite(nodes[:, 0], nodes[:, 1], nodes[:, 2], direction)
        return cls(nodes[:, 0].copy(), nodes[:, 1].copy(), nodes[:, 2].copy(), h, coeffs,
                   Termination(d.get("termination", "SpanEnd")), direction,
                   bool(d.get("logspace", False)), d.get("label", ""), d.get("message", ""))

    @classmethod
    def from_json(cls, text: str) -> Trajectory:
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_csv(cls, text: str) -> Trajectory:
        """Rebuild from ``x,y|u,slope`` rows with cubic Hermite dense output."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or len(rows[0]) < 3 or rows[0][0] != "x":
            raise ConfigError("trajectory CSV needs a header x,y|u,slope")
        logspace = rows[0][1] == "u"
        data = np.array([[float(v) for v in r[:3]] for r in rows[1:] if r], dtype=float)
        if len(data) < 2:
            raise ConfigError("trajectory CSV needs at least two nodes")
        x = data[:, 0]
        direction = 1 if x[-1] > x[0] else -1
        if np.any(np.diff(direction * x) <= 0):
            raise ConfigError("trajectory abscissae must be strictly monotone")
        h, coeffs = _hermite(x, data[:, 1], data[:, 2], direction)
        return cls(x.copy(), data[:, 1].copy(), data[:, 2].copy(), h, coeffs,
                   Termination.SPAN_END, direction, logspace, "csv")


def _hermite(x, y, slope, direction):
    t = direction * np.asarray(x, dtype=float)
    h = np.diff(t)
    f0 = direction * np.asarray(slope[:-1])
    f1 = direction * np.asarray(slope[1:])
    delta = np.diff(y) / h
    coeffs = np.column_stack([f0, 3 * delta - 2 * f0 - f1, f0 + f1 - 2 * delta, np.zeros_like(h)])
    return h, coeffs


# ---------------------------------------------------------------------------
# stepping core
# ---------------------------------------------------------------------------

def _dopri_step(rhs, t, y, f0, h):
    k = [f0]
    for i in range(1, 7):
        a = _A[i]
        acc = 0.0
        for j in range(i):
            acc += a[j] * k[j]
        k.append(rhs(t + _C[i] * h, y + h * acc))
    y1 = y + h * sum(b * kk for b, kk in zip(_B, k))
    err = h * sum(e * kk for e, kk in zip(_E, k))
    q = [sum(_P_ROWS[i][j] * k[i] for i in range(7)) for j in range(4)]
    return y1, k[6], err, q


def _poly_at(y0, h, q, th):
    return y0 + h * (((q[3] * th + q[2]) * th + q[1]) * th + q[0]) * th


def _theta_of(y0, h, q, target, rising):
    """Smallest-bracket bisection for ``p(th) = target`` on ``[0, 1]``.

    Returns the right end of the final bracket, where the level has been
    reached or passed.
    """
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        v = _poly_at(y0, h, q, mid)
        if (v >= target) if rising else (v <= target):
            hi = mid
        else:
            lo = mid
    return hi


def _initial_step(rhs, t0, y0, f0, t_end, cfg):
    if cfg.h_init is not None:
        return cfg.h_init
    sc = cfg.abs_tol + cfg.rel_tol * abs(y0)
    d0, d1 = abs(y0) / sc, abs(f0) / sc
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = abs(f1 - f0) / sc / h0 if math.isfinite(f1) else math.inf
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / ORDER)
    return max(min(100 * h0, h1, t_end - t0), cfg.h_min)


@dataclass
class _Event:
    level: float
    rising: bool
    cause: Termination


def _run(rhs: Callable[[float, float], float], x0: float, y0: float, x_end: float,
         cfg: IntegratorConfig, *, logspace: bool, events: Sequence[_Event],
         kinks: Callable[[float, float], list[float]] | None, label: str) -> Trajectory:
    if not math.isfinite(y0):
        raise DomainError(f"initial value must be finite, got {y0}")
    if x_end == x0:
        raise DomainError("empty integration span")
    direction = 1 if x_end > x0 else -1

    def g(t, y):
        return direction * rhs(direction * t, y)

    t, t_end, y = direction * x0, direction * x_end, float(y0)
    f = g(t, y)
    if not math.isfinite(f):
        raise DomainError(f"slope is not finite at the initial point ({x0}, {y0})")
    ts, ys, fs, hs, qs = [t], [y], [f], [], []
    cause, message = Termination.SPAN_END, ""
    h = min(_initial_step(g, t, y, f, t_end, cfg), cfg.h_max)
    caps = 0
    steps = 0
    while t < t_end:
        if steps >= cfg.max_steps:
            cause, message = Termination.STEP_FAILURE, f"max_steps={cfg.max_steps} exhausted"
            break
        h = min(h, cfg.h_max, t_end - t)
        if h < cfg.h_min or t + h == t:
            cause, message = Termination.STEP_FAILURE, f"step size {h:.3g} below h_min at x={direction * t:.17g}"
            break
        y1, f1, err, q = _dopri_step(g, t, y, f, h)
        if not (math.isfinite(y1) and math.isfinite(err) and math.isfinite(f1)):
            h *= 0.2
            continue
        sc = cfg.abs_tol + cfg.rel_tol * max(abs(y), abs(y1))
        errn = abs(err) / sc
        if errn > 1.0:
            h *= max(0.2, 0.9 * errn ** (-1.0 / ORDER))
            continue
        steps += 1
        if kinks is not None and caps < MAX_CAPS:
            ks = [k for k in kinks(min(y, y1), max(y, y1))
                  if abs(k - y) > 1e-9 * (max(1.0, abs(k)) if logspace else abs(k))
                  and abs(k - y1) > KINK_TOL * max(1.0, abs(k))]
            if ks:
                rising = y1 > y
                target = min(ks) if rising else max(ks)
                th = _theta_of(y, h, q, target, rising)
                if 0.0 < th < 1.0 and t + th * h > t:
                    # later passes use the shortened step's own interpolant,
                    # which is smooth up to (nearly) the kink
                    h = th * h
                    caps += 1
                    continue
        caps = 0
        # terminal events on the accepted step
        hit = None
        for ev in events:
            if (y1 >= ev.level > y) if ev.rising else (y1 <= ev.level < y):
                th = _theta_of(y, h, q, ev.level, ev.rising)
                if hit is None or th < hit[0]:
                    hit = (th, ev)
        if hit is not None:
            th, ev = hit
            tn = t + th * h
            yn = _poly_at(y, h, q, th)
            ts.append(tn)
            ys.append(yn)
            fs.append(g(tn, yn))
            hs.append(h)
            qs.append(q)
            cause = ev.cause
            message = f"reached {ev.level!r}"
            break
        t_new = t + h if t + h < t_end else t_end
        ts.append(t_new)
        ys.append(y1)
        fs.append(f1)
        hs.append(h)
        qs.append(q)
        t, y, f = t_new, y1, f1
        h *= min(5.0, max(0.2, 0.9 * (errn if errn > 0 else 1e-10) ** (-1.0 / ORDER)))
    t_arr = np.asarray(ts)
    return Trajectory(
        x=direction * t_arr,
        y=np.asarray(ys),
        slope=direction * np.asarray(fs),
        h=np.asarray(hs, dtype=float),
        coeffs=np.asarray(qs, dtype=float).reshape(-1, 4),
        termination=cause,
        direction=direction,
        logspace=logspace,
        label=label,
        message=message,
    )


def integrate(f: ScalarField, y0: float, span: tuple[float, float],
              cfg: IntegratorConfig | None = None) -> Trajectory:
    """Solve ``y' = F(x, y)``, ``y(span[0]) = y0`` up to ``span[1]``.

    Stops early with ``BlowUp`` once ``|y| >= y_max`` and with ``HitZero``
    when a nonzero solution reaches 0.  Backward spans are run in reversed
    time.  When ``cfg.logspace`` is set the call is forwarded to
    :func:`integrate_logspace` with ``u0 = log y0``.
    """
    cfg = cfg or IntegratorConfig()
    if cfg.logspace:
        if not y0 > 0:
            raise DomainError("log-space integration needs y0 > 0")
        return integrate_logspace(f, math.log(y0), span, cfg)
    events = [_Event(cfg.y_max, True, Termination.BLOW_UP),
              _Event(-cfg.y_max, False, Termination.BLOW_UP)]
    if y0 > 0:
        events.append(_Event(0.0, False, Termination.HIT_ZERO))
    elif y0 < 0:
        events.append(_Event(0.0, True, Termination.HIT_ZERO))
    kinks = None
    if isinstance(f, PiecewiseLogLinearField):
        def kinks(lo, hi):
            return f.kinks(lo, hi, logspace=False)
    return _run(f.func, span[0], y0, span[1], cfg, logspace=False, events=events,
                kinks=kinks, label=f.label)


def integrate_logspace(f: ScalarField, u0: float, span: tuple[float, float],
                       cfg: IntegratorConfig | None = None, *,
                       u_stop: float | None = None) -> Trajectory:
    """Solve ``u' = F(x, e^u) / e^u`` for ``u = log y``.

    ``BlowUp`` fires at ``u >= log(y_max)`` (or ``u_stop`` when given),
    ``HitZero`` at ``u <= cfg.u_floor``.  Piecewise fields step from kink to
    kink at integer ``u``.
    """
    cfg = cfg or IntegratorConfig()
    top = math.log(cfg.y_max) if u_stop is None else u_stop
    events = [_Event(top, True, Termination.BLOW_UP),
              _Event(cfg.u_floor, False, Termination.HIT_ZERO)]
    kinks = None
    if isinstance(f, PiecewiseLogLinearField):
        def kinks(lo, hi):
            return f.kinks(lo, hi, logspace=True)
    return _run(f.logspace, span[0], float(u0), span[1], cfg, logspace=True, events=events,
                kinks=kinks, label=f.label)


def reverse_time(f: ScalarField) -> ScalarField:
    """The field ``(x, y) -> -F(-x, y)``; forward runs of it retrace ``f`` backward."""
    if isinstance(f, PiecewiseLogLinearField):
        return f.with_sign(-f.sign)
    inner = f

    def func(x, y):
        return -inner.func(-x, y)

    def logspace(x, u):
        return -inner.logspace(-x, u)

    rev = ScalarField(func, autonomous=f.autonomous, label=f"rev[{f.label}]", logspace=logspace)
    rev.kinks = f.kinks  # type: ignore[method-assign]
    return rev


# ---------------------------------------------------------------------------
# level crossings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossingRecord:
    n: int
    level: float
    x_first: float
    x_last_before_next: float
    n_roots: int = 1
    flagged: bool = False

    def to_row(self) -> list:
        return [self.n, repr(self.level), repr(self.x_first), repr(self.x_last_before_next)]


def crossings_to_csv(records: Sequence[CrossingRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "level", "x_first", "x_last"])
    for r in records:
        w.writerow(r.to_row())
    return buf.getvalue()


_SUB = np.array([0.0, 0.25, 0.5, 0.75])


def _samples(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Internal times and states at four points per segment plus the end node."""
    t = traj.direction * traj.x
    nseg = len(traj.h)
    seg_len = np.diff(t)
    th = _SUB[None, :] * (seg_len / traj.h)[:, None]
    c = traj.coeffs
    poly = (((c[:, 3:4] * th + c[:, 2:3]) * th + c[:, 1:2]) * th + c[:, 0:1]) * th
    vals = traj.y[:nseg, None] + traj.h[:, None] * poly
    vals[:, 0] = traj.y[:nseg]
    times = t[:nseg, None] + _SUB[None, :] * seg_len[:, None]
    return np.append(times.ravel(), t[-1]), np.append(vals.ravel(), traj.y[-1])


def _roots(ts: np.ndarray, vs: np.ndarray, level: float) -> list[tuple[int, int]]:
    """Sample-index brackets ``(i, j)`` containing a solution of ``v = level``."""
    s = np.sign(vs - level)
    exact = np.flatnonzero(s == 0)
    flips = np.flatnonzero(s[:-1] * s[1:] < 0)
    out = [(int(i), int(i)) for i in exact] + [(int(i), int(i) + 1) for i in flips]
    out.sort()
    return out


def _bisect(traj: Trajectory, ts: np.ndarray, vs: np.ndarray, bracket: tuple[int, int],
            level: float) -> float:
    i, j = bracket
    a, b = float(ts[i]), float(ts[j])
    if i == j:
        return traj.direction * a
    fa = vs[i] - level
    while True:
        tol = X_TOL * max(1.0, abs(a), abs(b))
        if b - a <= tol:
            break
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        fm = traj(traj.direction * mid) - level
        if fm == 0.0:
            return traj.direction * mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return traj.direction * 0.5 * (a + b)


def detect_level_crossings(traj: Trajectory, n_range: Sequence[int] | range,
                           grid: Grid | str = Grid.DECAY) -> list[CrossingRecord]:
    """First and last crossing of each level ``e^{-n}`` (Decay) or ``e^n`` (Growth).

    ``x_first`` is the first solution of ``y(x) = level``; ``x_last_before_next``
    the last one before the first crossing of the next level (or before the
    end of the run if that level is never reached).  Levels the trajectory
    never meets produce no record.
    """
    grid = Grid(grid)
    sign = -1 if grid is Grid.DECAY else 1
    ns = list(n_range)
    if not ns or len(traj.h) == 0:
        return []
    ts, vs = _samples(traj)

    def state_level(n: int) -> float:
        return float(sign * n) if traj.logspace else math.exp(sign * n)

    roots = {n: _roots(ts, vs, state_level(n)) for n in range(min(ns), max(ns) + 2)}
    first: dict[int, float] = {}
    for n, brs in roots.items():
        if brs:
            first[n] = _bisect(traj, ts, vs, brs[0], state_level(n))
    records = []
    for n in ns:
        brs = roots.get(n) or []
        if not brs:
            continue
        level = state_level(n)
        x_first = first[n]
        nxt = first.get(n + 1)
        window = brs
        if nxt is not None:
            t_next = traj.direction * nxt
            window = [br for br in brs if ts[br[0]] <= t_next] or brs[:1]
        x_last = x_first if window[-1] == brs[0] else _bisect(traj, ts, vs, window[-1], level)
        records.append(CrossingRecord(n, math.exp(sign * n), x_first, x_last, len(window),
                                      len(window) >= DENSITY_FLAG))
    return records


# ---------------------------------------------------------------------------
# blow-up and collapse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlowupReport:
    """Outcome of a blow-up or collapse run.

    ``x_reach`` is the numeric time at the threshold (``y_max`` or
    ``e^-N_max``), ``tail_bound`` the analytic bound on the time still
    needed to reach infinity or zero, ``gaps`` the rows ``(n, gap, bound)``
    for consecutive level crossings.
    """

    kind: str
    x_reach: float
    tail_bound: float
    x_infinity_bracket: tuple[float, float]
    gaps: tuple[tuple[int, float, float], ...]
    gaps_ok: bool
    termination: Termination
    crossings: tuple[CrossingRecord, ...] = ()
    finite: bool = True
    budget_exceeded: bool = False
    lower_gaps: tuple[tuple[int, float, float], ...] = ()
    lower_gaps_ok: bool = True
    floor_checks: tuple[tuple[int, float, float], ...] = ()
    floor_ok: bool = True
    #: gaps checked against the bound with the smaller endpoint slope of the cell
    cell_gaps_ok: bool = True
    message: str = ""

    @property
    def passed(self) -> bool:
        return (self.gaps_ok and self.lower_gaps_ok and self.floor_ok
                and not self.budget_exceeded)

    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "schema": "osgood-report/1",
            "kind": self.kind,
            "x_reach": num(self.x_reach),
            "tail_bound": num(self.tail_bound),
            "x_infinity_bracket": [num(v) for v in self.x_infinity_bracket],
            "finite": self.finite,
            "termination": self.termination.value,
            "budget_exceeded": self.budget_exceeded,
            "gaps_ok": self.gaps_ok,
            "gaps": [[n, g, b] for n, g, b in self.gaps],
            "lower_gaps_ok": self.lower_gaps_ok,
            "lower_gaps": [[n, g, b] for n, g, b in self.lower_gaps],
            "floor_ok": self.floor_ok,
            "floor_checks": [[n, x, b] for n, x, b in self.floor_checks],
            "cell_gaps_ok": self.cell_gaps_ok,
            "passed": self.passed,
            "message": self.message,
        }


def _series_tail(m: Modulus, start: int, weight: float, budget: int = 4096) -> float:
    """``weight * sum_{n >= start} 1/phi(n)``; infinite unless convergence is declared."""
    if m.series_tag is not SeriesTag.KNOWN_CONVERGENT:
        return math.inf
    start = max(start, 1)
    head = partial_sum(m, start + budget - 1) - (partial_sum(m, start - 1) if start > 1 else 0.0)
    tail = tail_bounds(m, start + budget - 1)
    return weight * (head + tail.upper)


def _resolution_limited(traj: Trajectory) -> bool:
    """True when stepping stopped because ``x`` can no longer resolve the steps."""
    return traj.termination is Termination.STEP_FAILURE and "below h_min" in traj.message


def estimate_blowup(f: ScalarField, m: Modulus | None, y0: float,
                    cfg: IntegratorConfig | None = None, *, x_span: float = 1e6) -> BlowupReport:
    """Run ``y' = F(y)`` up to ``y_max`` and bracket the escape time.

    For a blow-up field the run goes directly in ``y`` up to ``y = 1`` and in
    log space after that.  Each crossing gap ``x_{n+1} - x_n`` between levels
    ``e^n`` is checked against ``2/phi(n)``, and the time left after
    ``y_max`` is bounded by ``sum_{n >= N} 2/phi(n)``, ``N = floor(log y_max)``.
    Any other field is integrated directly and gets no analytic tail.
    """
    cfg = cfg or IntegratorConfig()
    x0 = 0.0
    if not isinstance(f, PiecewiseLogLinearField):
        traj = integrate(f, y0, (x0, x0 + x_span), replace(cfg, logspace=False))
        blew = traj.termination is Termination.BLOW_UP
        x_reach = traj.x[-1]
        n_top = int(math.floor(math.log(cfg.y_max)))
        recs = detect_level_crossings(traj, range(0, n_top + 1), Grid.GROWTH)
        gaps = tuple((a.n, b.x_first - a.x_first, math.nan) for a, b in zip(recs, recs[1:]))
        return BlowupReport("blowup", float(x_reach), math.inf, (float(x_reach), math.inf), gaps,
                            True, traj.termination, tuple(recs), False, not blew,
                            message=traj.message)
    if f.variant != "blowup" or f.sign < 0:
        raise DomainError("estimate_blowup needs a blow-up field")
    m = m or f.modulus
    n_top = int(math.floor(math.log(cfg.y_max)))
    if y0 < 1.0:
        pre = integrate(f, y0, (x0, x0 + x_span), replace(cfg, logspace=False, y_max=math.e))
        hit = detect_level_crossings(pre, [0], Grid.GROWTH)
        if not hit:
            return BlowupReport("blowup", math.nan, math.inf, (math.nan, math.inf), (), False,
                                pre.termination, (), False, True,
                                message=f"did not reach y = 1 ({pre.message})")
        x1, u1 = hit[0].x_first, 0.0
    else:
        x1, u1 = x0, math.log(y0)
    traj = integrate_logspace(f, u1, (x1, x1 + x_span), cfg)
    reached = traj.termination is Termination.BLOW_UP
    x_reach = float(traj.x[-1])
    recs = detect_level_crossings(traj, range(0, n_top + 1), Grid.GROWTH)
    gaps = []
    for a, b in zip(recs, recs[1:]):
        if b.n == a.n + 1:
            gaps.append((a.n, b.x_first - a.x_first, 2.0 / m(float(a.n))))
    gaps_ok = all(g <= bnd + GAP_TOL for _, g, bnd in gaps)
    tail = _series_tail(m, n_top, 2.0) if reached else math.inf
    # the stretch from e^N to y_max is already spent, so the tail over-covers it
    if not reached and _resolution_limited(traj) and recs:
        last = recs[-1]
        x_reach, tail = last.x_first, _series_tail(m, last.n, 2.0)
        reached = math.isfinite(tail)
        msg = f"x resolution exhausted after level e^{last.n}; analytic tail from there"
    elif not reached:
        msg = f"budget exhausted before y_max ({traj.message})"
    elif not math.isfinite(tail):
        msg = "series not declared convergent; no finite escape bound"
    else:
        msg = f"escape time bracketed using sum_(n>={n_top}) 2/phi(n)"
    return BlowupReport("blowup", x_reach, tail, (x_reach, x_reach + tail), tuple(gaps), gaps_ok,
                        traj.termination, tuple(recs), math.isfinite(tail), not reached,
                        message=msg)


def hitting_time_zero(f: ScalarField, m: Modulus | None, y0: float,
                      cfg: IntegratorConfig | None = None, *, n_max: int = 300,
                      floor: Callable[[int], float] | None = None,
                      floor_range: tuple[int, int] | None = None,
                      x_span: float = 1e6) -> BlowupReport:
    """Follow the decay ``y' = -F(y)`` of a non-uniqueness field down to ``e^-n_max``.

    Gaps between the levels ``e^-n`` are checked against both sides of the
    proof's estimates: ``x_{n+1} - x_n <= (e-1)/phi(n)`` and
    ``x_{n+1} - x_n^+ >= 1/(2 phi(n+1))``.  With a convergent series the
    zero-hitting time is bracketed by
    ``[x(-n_max), x(-n_max) + sum_{n >= n_max} (e-1)/phi(n)]``; otherwise the
    upper end is ``inf`` and ``floor(n) <= x_n`` is certified over
    ``floor_range`` (default: the telescoped gap floor).
    """
    cfg = cfg or IntegratorConfig()
    if not isinstance(f, PiecewiseLogLinearField) or f.variant != "nonuniq":
        raise DomainError("hitting_time_zero needs a non-uniqueness field")
    if not 0.0 < y0 <= 1.0:
        raise DomainError(f"y0 must lie in (0, 1], got {y0}")
    m = m or f.modulus
    decay = f.with_sign(-1)
    cfg = replace(cfg, u_floor=-float(n_max))
    traj = integrate_logspace(decay, math.log(y0), (0.0, x_span), cfg)
    reached = traj.termination is Termination.HIT_ZERO
    x_reach = float(traj.x[-1])
    recs = detect_level_crossings(traj, range(0, n_max + 1), Grid.DECAY)
    by_n = {r.n: r for r in recs}
    gaps, lower, cell_ok = [], [], True
    for n in range(1, n_max):
        a, b = by_n.get(n), by_n.get(n + 1)
        if a is None or b is None:
            continue
        gap = b.x_first - a.x_first
        gaps.append((n, gap, (math.e - 1.0) / m(float(n))))
        # the decay speed on the cell is at least the smaller endpoint value of F
        cell = max((math.e - 1.0) / m(float(n)), (1.0 - 1.0 / math.e) / m(float(n - 1)))
        cell_ok = cell_ok and gap <= cell + GAP_TOL
        lower.append((n, b.x_first - a.x_last_before_next, 1.0 / (2.0 * m(float(n + 1)))))
    gaps_ok = all(g <= bnd + GAP_TOL for _, g, bnd in gaps)
    lower_ok = all(g >= bnd - GAP_TOL for _, g, bnd in lower)

    if floor is None:
        first = min(by_n) if by_n else 0
        x_start = by_n[first].x_first if by_n else 0.0

        def floor(n: int) -> float:
            return x_start + sum(1.0 / (2.0 * m(float(k + 1))) for k in range(first, n))
    lo, hi = floor_range or (1, n_max)
    checks = tuple((n, by_n[n].x_first, floor(n)) for n in range(lo, hi + 1) if n in by_n)
    floor_ok = all(x >= b - GAP_TOL for _, x, b in checks)

    tail = _series_tail(m, n_max, math.e - 1.0) if reached else math.inf
    if not reached and _resolution_limited(traj) and recs:
        last = recs[-1]
        x_reach, tail = last.x_first, _series_tail(m, last.n, math.e - 1.0)
        reached = math.isfinite(tail)
        msg = f"x resolution exhausted after level e^-{last.n}; analytic tail from there"
    elif not reached:
        msg = f"budget exhausted before e^-{n_max} ({traj.message})"
    elif math.isfinite(tail):
        msg = f"zero-hitting time bracketed using sum_(n>={n_max}) (e-1)/phi(n)"
    else:
        msg = "series not declared convergent; crossing times certified against the floor"
    return BlowupReport("collapse", x_reach, tail, (x_reach, x_reach + tail), tuple(gaps), gaps_ok,
                        traj.termination, tuple(recs), math.isfinite(tail), not reached,
                        tuple(lower), lower_ok, checks, floor_ok, cell_ok, msg)
