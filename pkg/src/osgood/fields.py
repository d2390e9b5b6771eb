"""Scalar slope fields, the counterexample constructions, and condition checks.

Two piecewise fields are built from a modulus ``phi`` on the geometric grid
``e^{+-n}``:

* the blow-up field, ``F(0) = 1``, ``F(e^n) = e^n phi(n)``, which satisfies a
  growth bound but whose solution from 0 escapes in finite time when
  ``sum 1/phi(n)`` converges;
* the non-uniqueness field, ``F(t) = 0`` for ``t <= 0`` and
  ``F(e^-n) = e^-n phi(n-1)``, whose decay ``y' = -F(y)`` reaches 0 in finite
  time under the same condition.

Both are affine in ``y`` between grid points.  Breakpoint indices come from
``floor(log y)`` so nothing is tabulated in advance.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError
from .modulus import Modulus

__all__ = [
    "ScalarField",
    "PiecewiseLogLinearField",
    "ConditionReport",
    "SamplingPlan",
    "build_blowup_field",
    "build_nonuniqueness_field",
    "eval_field",
    "eval_field_logspace",
    "shifted_field",
    "check_osgood_difference",
    "check_growth_bound",
    "merge_reports",
    "demo_sqrt_family",
    "sqrt_field",
    "riccati_field",
    "linear_field",
    "continuity_probe",
    "parse_field_spec",
]

E = math.e
INV_E = math.exp(-1.0)
#: largest |log y| handled on the linear scale; beyond it values go through log space
LOG_GRID_MAX = 700
#: roundoff allowance per field value in the difference check
ROUNDING_ULPS = 4.0


class ScalarField:
    """Slope function ``F(x, y)`` of a scalar ODE ``y' = F(x, y)``.

    ``logspace`` optionally gives ``F(x, e^u) / e^u`` directly, which the
    integrator uses for ``u = log y``; without it the quotient is formed
    numerically.
    """

    def __init__(self, func: Callable[[float, float], float], *, autonomous: bool = False,
                 label: str = "F", logspace: Callable[[float, float], float] | None = None):
        self.func = func
        self.autonomous = autonomous
        self.label = label
        self._logspace = logspace

    def __call__(self, x: float, y: float) -> float:
        return self.func(x, y)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label!r})"

    def logspace(self, x: float, u: float) -> float:
        if self._logspace is not None:
            return self._logspace(x, u)
        try:
            y = math.exp(u)
        except OverflowError:
            return math.copysign(math.inf, self.func(x, math.inf))
        if y == 0.0:
            raise DomainError(f"log-space evaluation underflows at u={u}")
        return self.func(x, y) / y

    def evaluate_many(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.fromiter((self.func(a, b) for a, b in zip(x.ravel(), y.ravel())),
                           dtype=float, count=x.size).reshape(x.shape)

    def kinks(self, lo: float, hi: float, logspace: bool = False) -> list[float]:
        """State values in the open interval ``(lo, hi)`` where ``F`` has a kink."""
        return []


class PiecewiseLogLinearField(ScalarField):
    """Autonomous field affine in ``y`` between the points ``e^{+-n}``.

    ``variant`` is ``"blowup"`` or ``"nonuniq"``; ``sign = -1`` gives the
    decay field ``-F``.  :meth:`value` is the unsigned ``F(y)``.
    """

    def __init__(self, modulus: Modulus, variant: str, sign: int = 1):
        if variant not in ("blowup", "nonuniq"):
            raise DomainError(f"unknown piecewise variant {variant!r}")
        if sign not in (1, -1):
            raise DomainError("sign must be +1 or -1")
        self.modulus = modulus
        self.variant = variant
        self.sign = sign
        self._phi: dict[int, float] = {}
        prefix = "" if sign > 0 else "-"
        super().__init__(self._signed, autonomous=True,
                         label=f"{prefix}{variant}[{modulus.family_name}]",
                         logspace=self._signed_logspace)

    # phi at integer nodes is needed over and over by the integrator
    def phi(self, n: int) -> float:
        v = self._phi.get(n)
        if v is None:
            v = self._phi[n] = self.modulus(float(n))
        return v

    def with_sign(self, sign: int) -> PiecewiseLogLinearField:
        other = PiecewiseLogLinearField(self.modulus, self.variant, sign)
        other._phi = self._phi
        return other

    def _signed(self, x: float, y: float) -> float:
        v = self.value(y)
        return v if self.sign > 0 else -v

    def _signed_logspace(self, x: float, u: float) -> float:
        v = self.eval_logspace(u)
        return v if self.sign > 0 else -v

    # -- breakpoints ---------------------------------------------------------

    def breakpoint(self, n: int) -> tuple[float, float]:
        """``(y_n, F(y_n))`` at grid index ``n`` (``y_n = e^n``; ``n <= -1`` for nonuniq)."""
        if self.variant == "blowup":
            if n < 0:
                raise DomainError("blow-up breakpoints have n >= 0")
            y = math.exp(n)
            return y, y * self.phi(n)
        if n > -1:
            raise DomainError("non-uniqueness breakpoints have n <= -1")
        y = math.exp(n)
        return y, y * self.phi(-n - 1)

    def breakpoints(self, n_lo: int, n_hi: int) -> list[tuple[float, float]]:
        return [self.breakpoint(n) for n in range(n_lo, n_hi + 1)]

    def to_csv(self, n_lo: int, n_hi: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "F"])
        for y, v in self.breakpoints(n_lo, n_hi):
            w.writerow([repr(y), repr(v)])
        return buf.getvalue()

    # -- evaluation ----------------------------------------------------------

    @staticmethod
    def _grid_index(y: float) -> int:
        """``n`` with ``e^n <= y < e^(n+1)``."""
        n = math.floor(math.log(y))
        if math.exp(n) > y:
            n -= 1
        elif math.exp(n + 1) <= y:
            n += 1
        return n

    def value(self, y: float) -> float:
        if math.isnan(y):
            return math.nan
        if self.variant == "blowup":
            if y <= 0.0:
                return 1.0
            if y <= 1.0:
                return 1.0 + (self.phi(0) - 1.0) * y
            if math.isinf(y):
                return math.inf
            n = self._grid_index(y)
            if n >= LOG_GRID_MAX:
                return y * self.eval_logspace(math.log(y))
            a = math.exp(n)
            Fa = a * self.phi(n)
            if y == a:
                return Fa
            b = math.exp(n + 1)
            s = (y - a) / (b - a)
            return (1.0 - s) * Fa + s * (b * self.phi(n + 1))
        # nonuniq
        if y <= 0.0:
            return 0.0
        if y >= INV_E:
            return INV_E * self.phi(0)
        n = -self._grid_index(y) - 1  # e^-(n+1) <= y < e^-n, n >= 1
        if n >= LOG_GRID_MAX:
            return y * self.eval_logspace(math.log(y))
        a = math.exp(-n - 1)
        Fa = a * self.phi(n)
        if y == a:
            return Fa
        b = math.exp(-n)
        s = (y - a) / (b - a)
        return (1.0 - s) * Fa + s * (b * self.phi(n - 1))

    def eval_logspace(self, u: float) -> float:
        """``F(e^u) / e^u`` without forming ``e^u``; unsigned.

        On a segment ``[k, k+1]`` with ``r = u - k`` the affine interpolant
        divided by ``e^u`` is ``e^-r ((1-s) q_k + s e q_{k+1})`` where
        ``q_k = F(e^k)/e^k`` and ``s = expm1(r)/(e-1)``.
        """
        k = math.floor(u)
        r = u - k
        if self.variant == "blowup":
            if u < 0.0:
                try:
                    return math.exp(-u) + self.phi(0) - 1.0
                except OverflowError:
                    return math.inf
            lo, hi = self.phi(k), self.phi(k + 1)
        else:
            if u >= -1.0:
                return self.phi(0) * math.exp(-1.0 - u)
            lo, hi = self.phi(-k - 1), self.phi(-k - 2)
        if r == 0.0:
            return lo
        s = math.expm1(r) / (E - 1.0)
        return math.exp(-r) * ((1.0 - s) * lo + s * E * hi)

    def evaluate_many(self, x, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.sign * self.values(np.broadcast_to(y, np.broadcast(x, y).shape))

    def values(self, y) -> np.ndarray:
        """Vectorized unsigned ``F(y)``."""
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape)
        flat_y = y.ravel()
        flat = out.ravel()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.variant == "blowup":
                low = flat_y <= 1.0
                flat[low] = np.where(flat_y[low] <= 0.0, 1.0,
                                     1.0 + (self.phi(0) - 1.0) * flat_y[low])
                hi_mask = ~low
                yy = flat_y[hi_mask]
                n = np.floor(np.log(yy))
                n = np.where(np.exp(n) > yy, n - 1, n)
                n = np.where(np.exp(n + 1) <= yy, n + 1, n)
                a, b = np.exp(n), np.exp(n + 1)
                pa = self.modulus.values(n)
                pb = self.modulus.values(n + 1)
                s = (yy - a) / (b - a)
                v = np.where(s == 0.0, a * pa, (1.0 - s) * (a * pa) + s * (b * pb))
                flat[hi_mask] = v
            else:
                flat[flat_y <= 0.0] = 0.0
                top = flat_y >= INV_E
                flat[top] = INV_E * self.phi(0)
                mid = (flat_y > 0.0) & ~top
                yy = flat_y[mid]
                g = np.floor(np.log(yy))
                g = np.where(np.exp(g) > yy, g - 1, g)
                g = np.where(np.exp(g + 1) <= yy, g + 1, g)
                n = -g - 1
                a, b = np.exp(-n - 1), np.exp(-n)
                pa = self.modulus.values(n)
                pb = self.modulus.values(n - 1)
                s = (yy - a) / (b - a)
                v = np.where(s == 0.0, a * pa, (1.0 - s) * (a * pa) + s * (b * pb))
                flat[mid] = v
        return out

    def kinks(self, lo: float, hi: float, logspace: bool = False) -> list[float]:
        if lo > hi:
            lo, hi = hi, lo
        if logspace:
            first = math.floor(lo) + 1
            last = math.ceil(hi) - 1
            if self.variant == "blowup":
                first = max(first, 0)
            else:
                last = min(last, -1)
            return [float(k) for k in range(first, last + 1)]
        pts: list[float] = []
        if self.variant == "blowup":
            if lo < 0.0 < hi:
                pts.append(0.0)
            if hi > 1.0:
                k0 = 0 if lo < 1.0 else self._grid_index(lo) + 1
                k1 = min(self._grid_index(hi), LOG_GRID_MAX)
                pts += [math.exp(k) for k in range(k0, k1 + 1) if lo < math.exp(k) < hi]
        else:
            if lo < 0.0 < hi:
                pts.append(0.0)
            top = min(hi, INV_E * 1.0000001)
            if top > 0.0 and lo < INV_E:
                k0 = 1 if top >= INV_E else -self._grid_index(top)
                k1 = LOG_GRID_MAX if lo <= 0.0 else min(-self._grid_index(lo), LOG_GRID_MAX)
                pts += [math.exp(-k) for k in range(k0, k1 + 1) if lo < math.exp(-k) < hi]
        return sorted(pts)


# ---------------------------------------------------------------------------
# builders and demo fields
# ---------------------------------------------------------------------------

def build_blowup_field(m: Modulus) -> PiecewiseLogLinearField:
    """``F(0)=1``, ``F(e^n)=e^n phi(n)``, affine in between, ``F=1`` for ``y<0``."""
    return PiecewiseLogLinearField(m, "blowup")


def build_nonuniqueness_field(m: Modulus) -> PiecewiseLogLinearField:
    """``F=0`` on ``y<=0``, ``F(e^-n)=e^-n phi(n-1)``, constant ``e^-1 phi(0)`` from ``e^-1`` on."""
    return PiecewiseLogLinearField(m, "nonuniq")


def sqrt_field() -> ScalarField:
    return ScalarField(lambda x, y: 2.0 * math.sqrt(abs(y)), autonomous=True, label="2sqrt|y|")


def _riccati_log(x: float, u: float) -> float:
    try:
        return math.exp(-u) + math.exp(u)
    except OverflowError:
        return math.inf


def riccati_field() -> ScalarField:
    return ScalarField(lambda x, y: 1.0 + y * y, autonomous=True, label="1+y^2",
                       logspace=_riccati_log)


def linear_field(L: float) -> ScalarField:
    """``F(x, y) = L y``; pass a negative ``L`` for decay."""
    L = float(L)
    return ScalarField(lambda x, y: L * y, autonomous=True, label=f"{L:g}*y",
                       logspace=lambda x, u: L)


def demo_sqrt_family(a: float, b: float, x: float) -> float:
    """Member ``(a, b)`` of the solution family of ``y' = 2 sqrt|y|``, ``y(0)=0`` (for a<=0<=b)."""
    if a > b:
        raise DomainError(f"need a <= b, got a={a}, b={b}")
    if x < a:
        return -((x - a) ** 2)
    if x > b:
        return (x - b) ** 2
    return 0.0


def parse_field_spec(text: str, m: Modulus | None = None) -> ScalarField:
    """``blowup|nonuniq|sqrt|riccati|linear:<L>``; the first two need ``m``."""
    if text in ("blowup", "nonuniq"):
        if m is None:
            raise DomainError(f"field {text!r} needs a modulus")
        return build_blowup_field(m) if text == "blowup" else build_nonuniqueness_field(m)
    if text == "sqrt":
        return sqrt_field()
    if text == "riccati":
        return riccati_field()
    if text.startswith("linear:"):
        try:
            return linear_field(float(text.split(":", 1)[1]))
        except ValueError:
            raise DomainError(f"bad linear field {text!r}") from None
    raise DomainError(f"unknown field {text!r}")


# ---------------------------------------------------------------------------
# evaluation entry points
# ---------------------------------------------------------------------------

def eval_field(f: ScalarField, x: float, y: float) -> float:
    return f(x, y)


def eval_field_logspace(f: ScalarField, u: float) -> float:
    if not isinstance(f, PiecewiseLogLinearField):
        raise DomainError("log-space evaluation needs a piecewise log-linear field")
    return f.eval_logspace(u)


def shifted_field(F: ScalarField, y1) -> ScalarField:
    """``G(x, t) = F(x, t + y1(x)) - F(x, y1(x))``.

    ``y1`` is a trajectory with dense output; the derivative of the reference
    solution is taken as ``F(x, y1(x))`` so ``G(x, 0) == 0`` exactly.
    Queries outside the trajectory span raise ``OutOfRangeError``.
    """
    def G(x: float, t: float) -> float:
        base = y1.value(x)
        return F(x, t + base) - F(x, base)

    return ScalarField(G, autonomous=False, label=f"shift[{F.label}]")


def continuity_probe(f: ScalarField, points: Iterable[tuple[float, float]],
                     scales: Sequence[float] = (1e-3, 1e-6, 1e-9)) -> np.ndarray:
    """``max |F(x, y+h) - F(x, y)|`` over ``points`` for each ``h`` in ``scales``."""
    pts = list(points)
    return np.array([max(abs(f(x, y + h) - f(x, y)) for x, y in pts) for h in scales])


# ---------------------------------------------------------------------------
# condition checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPlan:
    """Deterministic sample generator for the condition checks.

    Gaps ``z - y`` are stratified log-uniformly over ``gap_range`` (one draw
    per stratum, then shuffled).  ``y`` is uniform on ``y_range`` except for a
    ``y_log_fraction`` share drawn log-uniformly, which probes the region near
    ``y_range[0]``, and a ``y_edge_fraction`` share pinned to ``y_range[0]``.
    """

    n_samples: int = 100_000
    seed: int = 0
    x_range: tuple[float, float] = (0.0, 1.0)
    y_range: tuple[float, float] = (0.0, 1.0)
    gap_range: tuple[float, float] = (1e-12, 1.0)
    y_log_fraction: float = 0.5
    y_edge_fraction: float = 0.01
    symmetric: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise DomainError("n_samples must be positive")
        lo, hi = self.gap_range
        if not 0 < lo < hi <= 1:
            raise DomainError("gap_range must satisfy 0 < lo < hi <= 1")
        if self.y_range[0] > self.y_range[1]:
            raise DomainError("empty y_range")

    def _stratified_log(self, rng: np.random.Generator, lo: float, hi: float) -> np.ndarray:
        n = self.n_samples
        a, b = math.log(lo), math.log(hi)
        v = np.exp(a + (np.arange(n) + rng.random(n)) / n * (b - a))
        return np.minimum(v[rng.permutation(n)], hi)

    def difference_samples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        n = self.n_samples
        x = rng.uniform(*self.x_range, size=n)
        gaps = self._stratified_log(rng, *self.gap_range)
        y_lo, y_hi = self.y_range
        y = rng.uniform(y_lo, y_hi, size=n)
        n_log = int(n * self.y_log_fraction) if y_lo >= 0 else 0
        if n_log:
            log_lo = max(y_lo, self.gap_range[0])
            if log_lo < y_hi:
                y[:n_log] = np.exp(rng.uniform(math.log(log_lo), math.log(y_hi), size=n_log))
        n_edge = int(n * self.y_edge_fraction)
        if n_edge:
            y[n_log:n_log + n_edge] = y_lo
        y = y[rng.permutation(n)]
        z = y + gaps
        return x, y, z

    def growth_samples(self) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        n = self.n_samples
        x = rng.uniform(*self.x_range, size=n)
        lo, hi = self.y_range
        if not 0 < lo < hi:
            raise DomainError("growth sampling needs 0 < y_range[0] < y_range[1]")
        a, b = math.log(lo), math.log(hi)
        y = np.exp(a + (np.arange(n) + rng.random(n)) / n * (b - a))
        y = np.minimum(y[rng.permutation(n)], hi)
        if self.symmetric:
            y = np.where(rng.random(n) < 0.5, -y, y)
        return x, y


@dataclass(frozen=True)
class ConditionReport:
    samples_checked: int
    worst_ratio: float
    worst_witness: tuple[float, ...]
    passed: bool

    def to_dict(self) -> dict:
        return {"samples_checked": self.samples_checked, "worst_ratio": self.worst_ratio,
                "worst_witness": list(self.worst_witness), "passed": self.passed}


def _report(ratio: np.ndarray, witnesses: Sequence[np.ndarray]) -> ConditionReport:
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    i = int(np.argmax(ratio))
    worst = float(ratio[i])
    return ConditionReport(int(ratio.size), worst, tuple(float(w[i]) for w in witnesses),
                           bool(worst < 1.0))


def merge_reports(*reports: ConditionReport) -> ConditionReport:
    """Combine reports over disjoint sample sets (max ratio wins)."""
    worst = max(reports, key=lambda r: r.worst_ratio)
    total = sum(r.samples_checked for r in reports)
    return ConditionReport(total, worst.worst_ratio, worst.worst_witness,
                           all(r.passed for r in reports))


def check_osgood_difference(f: ScalarField, m: Modulus, psi_const: float = 1.0,
                            sampler: SamplingPlan | None = None) -> ConditionReport:
    """Sample ``|F(x,y) - F(x,z)| < (z-y) psi phi(|log(z-y)|)`` for ``y < z <= y+1``.

    The ratio of the two sides is reported; the check passes when every
    sampled ratio is below 1.  At gaps near ``1e-12`` the difference
    ``F(y) - F(z)`` is dominated by cancellation, so it is first reduced by
    the evaluation error of the two values (``ROUNDING_ULPS`` units of
    roundoff each); a violation must exceed rounding to be counted.
    """
    if not psi_const > 0:
        raise DomainError("psi_const must be positive")
    sampler = sampler or SamplingPlan()
    x, y, z = sampler.difference_samples()
    d = z - y
    keep = (d > 0) & (d <= 1)
    x, y, z, d = x[keep], y[keep], z[keep], d[keep]
    fy, fz = f.evaluate_many(x, y), f.evaluate_many(x, z)
    slack = ROUNDING_ULPS * np.finfo(float).eps * (np.abs(fy) + np.abs(fz))
    diff = np.maximum(np.abs(fy - fz) - slack, 0.0)
    bound = d * psi_const * m.values(np.abs(np.log(d)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = diff / bound
    return _report(ratio, (x, y, z))


def check_growth_bound(f: ScalarField, m: Modulus, psi_const: float = 1.0,
                       sampler: SamplingPlan | None = None) -> ConditionReport:
    """Sample ``|F(x,y)| < |y| psi phi(log(2+|y|))``; witness is ``(x, y)``."""
    if not psi_const > 0:
        raise DomainError("psi_const must be positive")
    sampler = sampler or SamplingPlan(y_range=(1e-6, 1e6))
    x, y = sampler.growth_samples()
    val = np.abs(f.evaluate_many(x, y))
    ay = np.abs(y)
    bound = ay * psi_const * m.values(np.log(2.0 + ay))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = val / bound
    return _report(ratio, (x, y))
