"""Moduli phi and the series sum 1/phi(n).

A :class:`Modulus` is a positive, nondecreasing function on ``[0, inf)``.
Whether ``sum 1/phi(n)`` diverges decides whether the difference bound
``|F(x,y)-F(x,z)| < (z-y) psi(x) phi(|log(z-y)|)`` forces uniqueness and
whether the growth bound ``|F(x,y)| < |y| psi(x) phi(log(2+|y|))`` forces
global existence.  Numerics alone cannot settle divergence, so every built-in
family carries an analytic :class:`SeriesTag` and the numeric classifier only
ever confirms or flags it.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .errors import DomainError

__all__ = [
    "SeriesTag",
    "Verdict",
    "Modulus",
    "SeriesEstimate",
    "TailBounds",
    "FAMILIES",
    "builtin",
    "from_table",
    "parse_modulus_spec",
    "eval_modulus",
    "partial_sum",
    "tail_bounds",
    "classify_series",
    "truncate_modulus",
]

#: thresholds of the untagged classifier
S_MAX = 1e6
EPS_TAIL = 1e-12
DEFAULT_BUDGET = 2**20
#: quadrature cutoff before the analytic remainder takes over
T_MAX = 1e12


class SeriesTag(str, Enum):
    KNOWN_DIVERGENT = "KnownDivergent"
    KNOWN_CONVERGENT = "KnownConvergent"
    UNTAGGED = "Untagged"


class Verdict(str, Enum):
    DIVERGES = "Diverges"
    CONVERGES = "Converges"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Modulus:
    """Nondecreasing positive function on ``[0, inf)``.

    ``func`` should accept numpy arrays; scalar-only callables are wrapped with
    :func:`numpy.vectorize` on demand.  ``spec`` is the textual form accepted by
    :func:`parse_modulus_spec`, kept so moduli can cross process boundaries.
    """

    func: Callable = field(repr=False)
    family_name: str
    series_tag: SeriesTag = SeriesTag.UNTAGGED
    spec: str | None = None
    truncated: bool = False

    def __call__(self, t: float) -> float:
        return eval_modulus(self, t)

    def values(self, t) -> np.ndarray:
        """Vectorized evaluation; validates positivity but not the domain."""
        arr = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            try:
                out = np.asarray(self.func(arr), dtype=float)
            except (TypeError, ValueError):
                out = np.asarray(np.vectorize(self.func, otypes=[float])(arr))
        if out.shape != arr.shape:
            out = np.broadcast_to(out, arr.shape).astype(float)
        if np.any(~(out > 0)):
            bad = arr[~(out > 0)].ravel()[0]
            raise DomainError(f"modulus {self.family_name!r} is not positive at t={bad!r}")
        return out


class TailBounds(NamedTuple):
    lower: float
    upper: float
    converged: bool = True


@dataclass(frozen=True)
class SeriesEstimate:
    N: int
    partial: float
    tail_lower: float
    tail_upper: float
    verdict: Verdict
    evidence: str
    consistent: bool = True
    checkpoints: tuple[tuple[int, float], ...] = ()


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _constant(L: float = 1.0) -> Modulus:
    L = float(L)
    if not L > 0:
        raise DomainError(f"constant modulus needs L > 0, got {L}")
    return Modulus(lambda t: L + 0.0 * np.asarray(t, dtype=float), f"constant(L={L:g})",
                   SeriesTag.KNOWN_DIVERGENT, f"family=constant,L={L!r}")


def _power(p: float = 2.0) -> Modulus:
    p = float(p)
    if not p >= 0:
        raise DomainError(f"power modulus needs p >= 0, got {p}")
    tag = SeriesTag.KNOWN_CONVERGENT if p > 1 else SeriesTag.KNOWN_DIVERGENT
    return Modulus(lambda t: np.power(1.0 + np.asarray(t, dtype=float), p), f"(1+t)^{p:g}",
                   tag, f"family=power,p={p!r}")


def _simple(name: str, label: str, func: Callable, tag: SeriesTag) -> Callable[[], Modulus]:
    def build() -> Modulus:
        return Modulus(func, label, tag, f"family={name}")
    return build


FAMILIES: dict[str, Callable[..., Modulus]] = {
    "constant": _constant,
    "linear": _simple("linear", "1+t", lambda t: 1.0 + np.asarray(t, dtype=float),
                      SeriesTag.KNOWN_DIVERGENT),
    "sqrt": _simple("sqrt", "1+sqrt(t)", lambda t: 1.0 + np.sqrt(t), SeriesTag.KNOWN_DIVERGENT),
    "poly2": _simple("poly2", "(1+t)^2", lambda t: np.square(1.0 + np.asarray(t, dtype=float)),
                     SeriesTag.KNOWN_CONVERGENT),
    "maxsq": _simple("maxsq", "max(1,t^2)", lambda t: np.maximum(1.0, np.square(t)),
                     SeriesTag.KNOWN_CONVERGENT),
    "exp": _simple("exp", "exp(t)", np.exp, SeriesTag.KNOWN_CONVERGENT),
    "tlogt": _simple("tlogt", "(1+t)(1+log(1+t))",
                     lambda t: (1.0 + np.asarray(t, dtype=float)) * (1.0 + np.log1p(t)),
                     SeriesTag.KNOWN_DIVERGENT),
    "power": _power,
}


def builtin(name: str, **params: float) -> Modulus:
    """Instantiate a built-in family by name."""
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown modulus family {name!r}; choose from {sorted(FAMILIES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for family {name!r}: {params}") from exc


def from_table(t, phi, *, tag: SeriesTag | str = SeriesTag.UNTAGGED, name: str = "table",
               spec: str | None = None) -> Modulus:
    """Linear interpolation through breakpoints, constant beyond either end.

    Raises :class:`DomainError` unless abscissae increase strictly and the
    values are positive and nondecreasing.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if t.ndim != 1 or t.shape != phi.shape or t.size < 1:
        raise DomainError("table needs matching 1-d columns t and phi")
    if np.any(np.diff(t) <= 0):
        raise DomainError("table abscissae must be strictly increasing")
    if np.any(~(phi > 0)):
        raise DomainError("table values must be positive")
    if np.any(np.diff(phi) < 0):
        raise DomainError("table values must be nondecreasing")
    t.setflags(write=False)
    phi.setflags(write=False)
    return Modulus(lambda s: np.interp(s, t, phi), name, SeriesTag(tag), spec)


def _read_table(path: str | Path) -> tuple[list[float], list[float]]:
    ts, phis = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                a, b = float(row[0]), float(row[1])
            except ValueError:
                if ts:
                    raise DomainError(f"malformed table row {row!r} in {path}") from None
                continue  # header
            ts.append(a)
            phis.append(b)
    return ts, phis


def parse_modulus_spec(text: str) -> Modulus:
    """Parse ``family=<name>[,k=v...]`` or ``table=<path>[,tag=<tag>]``.

    Either form accepts ``truncate=1`` to apply :func:`truncate_modulus`.
    """
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts or "=" not in parts[0]:
        raise DomainError(f"cannot parse modulus spec {text!r}")
    key, value = parts[0].split("=", 1)
    opts = {}
    for p in parts[1:]:
        if "=" not in p:
            raise DomainError(f"cannot parse modulus option {p!r}")
        k, v = p.split("=", 1)
        opts[k.strip()] = v.strip()
    truncate = opts.pop("truncate", "0") not in ("0", "false", "no")
    if key == "family":
        try:
            params = {k: float(v) for k, v in opts.items()}
        except ValueError as exc:
            raise DomainError(f"non-numeric parameter in {text!r}") from exc
        m = builtin(value, **params)
        return truncate_modulus(m) if truncate else m
    if key == "table":
        ts, phis = _read_table(value)
        tag = opts.pop("tag", SeriesTag.UNTAGGED.value)
        if opts:
            raise DomainError(f"unknown table options {sorted(opts)}")
        try:
            tag = SeriesTag(tag)
        except ValueError:
            raise DomainError(f"unknown series tag {tag!r}") from None
        m = from_table(ts, phis, tag=tag, name=f"table:{Path(value).name}", spec=text)
        return truncate_modulus(m) if truncate else m
    raise DomainError(f"modulus spec must start with family= or table=, got {text!r}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def eval_modulus(m: Modulus, t: float) -> float:
    if not t >= 0:
        raise DomainError(f"modulus evaluated at t={t!r} < 0")
    with np.errstate(over="ignore"):
        v = float(m.func(t))
    if not v > 0:
        raise DomainError(f"modulus {m.family_name!r} returned {v!r} at t={t!r}")
    return v


def _terms(m: Modulus, N: int) -> np.ndarray:
    phi = m.values(np.arange(1, N + 1, dtype=float))
    return 1.0 / phi


def partial_sum(m: Modulus, N: int) -> float:
    """``sum_{n=1}^N 1/phi(n)`` with exactly rounded summation."""
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    return math.fsum(_terms(m, int(N)))


def _quad(g: Callable[[float], float], a: float, b: float) -> tuple[float, float, bool]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = integrate.quad(g, a, b, limit=200, epsabs=1e-15, epsrel=1e-11, full_output=1)
    return out[0], out[1], len(out) == 3


def _integral(g: Callable[[float], float], a: float, b: float) -> tuple[float, float, bool]:
    # doubling pieces keep quad's subdivision local on long ranges
    total, err, ok = 0.0, 0.0, True
    lo = a
    while lo < b:
        hi = min(b, max(2.0 * lo, lo + 1.0))
        v, e, good = _quad(g, lo, hi)
        total += v
        err += e
        ok &= good
        lo = hi
    return total, err, ok


def tail_bounds(m: Modulus, N: int, *, t_max: float = T_MAX) -> TailBounds:
    """Integral-test bracket for ``sum_{n>N} 1/phi(n)``.

    ``int_{N+1}^inf dt/phi <= tail <= int_N^inf dt/phi``.  The integrals run
    by adaptive quadrature to ``t_max``; the remainder past ``t_max`` is only
    integrated when the tag declares convergence, otherwise the upper bound is
    ``inf``.  A ``KnownDivergent`` tag gives ``(inf, inf)``.
    """
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if m.series_tag is SeriesTag.KNOWN_DIVERGENT:
        return TailBounds(math.inf, math.inf, True)

    def g(t: float) -> float:
        with np.errstate(over="ignore"):
            return 1.0 / float(m.func(t))

    head_lo, e_lo, ok_lo = _integral(g, N + 1.0, t_max)
    head_up, e_up, ok_up = _integral(g, float(N), t_max)
    converged = ok_lo and ok_up
    if m.series_tag is SeriesTag.KNOWN_CONVERGENT:
        rem, e_rem, ok_rem = _quad(g, t_max, math.inf)
        converged &= ok_rem
        lower = max(0.0, head_lo + rem - e_lo - e_rem)
        upper = head_up + rem + e_up + e_rem
    else:
        lower = max(0.0, head_lo - e_lo)
        upper = math.inf
    if not converged:
        upper = math.inf
    return TailBounds(lower, upper, converged)


def _slowing(blocks: list[float]) -> bool:
    # condensation blocks of a divergent series do not shrink geometrically
    if len(blocks) < 3:
        return False
    a, b, c = blocks[-3:]
    return b >= 0.9 * a and c >= 0.9 * b


def _shrinking(blocks: list[float], ratio: float = 0.75) -> bool:
    # condensation ratio test: dyadic blocks shrinking geometrically point to convergence
    if len(blocks) < 4:
        return False
    a, b, c, d = blocks[-4:]
    return b <= ratio * a and c <= ratio * b and d <= ratio * c


def classify_series(m: Modulus, budget: int = DEFAULT_BUDGET, *, s_max: float = S_MAX,
                    eps_tail: float = EPS_TAIL) -> SeriesEstimate:
    """Decide the fate of ``sum 1/phi(n)`` conservatively.

    Partial sums are taken at checkpoints ``N = 2^k`` up to ``budget`` terms.
    A tag is authoritative; the numbers can only mark it inconsistent.
    """
    if budget < 1:
        raise DomainError(f"budget must be >= 1, got {budget}")
    K = int(math.floor(math.log2(budget)))
    N = 2**K
    terms = _terms(m, N)
    checkpoints = [(2**k, math.fsum(terms[: 2**k])) for k in range(K + 1)]
    partial = checkpoints[-1][1]
    blocks = [b - a for (_, a), (_, b) in zip(checkpoints, checkpoints[1:])]
    tail = tail_bounds(m, N)

    numeric_div = partial > s_max and _slowing(blocks)
    numeric_conv = math.isfinite(tail.upper) and tail.upper < eps_tail
    if numeric_div:
        numeric = Verdict.DIVERGES
    elif numeric_conv:
        numeric = Verdict.CONVERGES
    else:
        numeric = Verdict.UNKNOWN

    facts = (f"partial sum {partial:.12g} at N={N}; tail in [{tail.lower:.6g}, {tail.upper:.6g}]"
             + ("" if tail.converged else " (quadrature did not converge)"))
    consistent = True
    if m.series_tag is SeriesTag.UNTAGGED:
        verdict = numeric
        evidence = f"untagged; numeric verdict {numeric.value}; {facts}"
    else:
        verdict = (Verdict.DIVERGES if m.series_tag is SeriesTag.KNOWN_DIVERGENT
                   else Verdict.CONVERGES)
        if m.series_tag is SeriesTag.KNOWN_CONVERGENT:
            consistent = numeric is not Verdict.DIVERGES and math.isfinite(tail.upper)
        else:
            consistent = numeric is not Verdict.CONVERGES and not _shrinking(blocks)
            if not consistent and numeric is Verdict.UNKNOWN:
                numeric = Verdict.CONVERGES
        evidence = (f"tagged {m.series_tag.value}; {facts}; "
                    + ("numerics consistent" if consistent
                       else f"INCONSISTENT: numerics suggest {numeric.value}"))
    return SeriesEstimate(N, partial, tail.lower, tail.upper, verdict, evidence, consistent,
                          tuple(checkpoints))


def truncate_modulus(m: Modulus) -> Modulus:
    """``t -> min(phi(t), max(1, t^2))``.

    Agrees with ``min(phi(n), n^2)`` on integers ``n >= 1`` and keeps the
    convergence class of the series, so the tag carries over.
    """
    if m.truncated:
        return m
    inner = m.func

    def func(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return np.minimum(inner(t), np.maximum(1.0, t * t))

    spec = None if m.spec is None else m.spec + ",truncate=1"
    return Modulus(func, f"min({m.family_name}, max(1,t^2))", m.series_tag, spec, truncated=True)
