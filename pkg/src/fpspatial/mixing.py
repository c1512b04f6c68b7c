"""Mixing-coefficient bound profiles and the lattice sums built on them.

A :class:`MixingProfile` is a certified upper bound ``m -> alpha_{1,tau}(m)``
(or ``rho_{1,tau}(m)``), never an estimate.  Infinite sums over polynomial
tails are evaluated in closed form with Hurwitz zeta functions and come with
an integral-comparison bracket for the tail.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy.special import zeta

INF = math.inf


class NonSummableError(ValueError):
    """The profile does not satisfy the summability needed by the computation."""


class CannotCertifyError(ValueError):
    """The profile has no tail descriptor, so infinite sums cannot be certified."""


# --------------------------------------------------------------------------
# decay descriptors


@dataclass(frozen=True)
class FiniteRange:
    """``bound(m) = level`` for ``m <= m0`` and ``0`` beyond."""

    m0: int
    level: float | None = None  # None: the trivial bound for the profile kind

    def __post_init__(self):
        if self.m0 < 0:
            raise ValueError("finite range m0 must be nonnegative")


@dataclass(frozen=True)
class Polynomial:
    """``bound(m) = min(cap, scale * m**-theta)``; ``cap=None`` means no cap."""

    theta: float
    scale: float = 1.0
    cap: float | None = None

    def __post_init__(self):
        if not self.theta > 0 or not self.scale > 0:
            raise ValueError("polynomial decay needs theta > 0 and scale > 0")
        if self.cap is not None and not self.cap > 0:
            raise ValueError("cap must be positive")

    def value(self, m):
        v = self.scale * np.asarray(m, dtype=np.float64) ** (-self.theta)
        return v if self.cap is None else np.minimum(v, self.cap)

    def cap_end(self) -> int:
        """Largest ``m`` at which the cap is strictly active (0 if never)."""
        if self.cap is None or self.scale <= self.cap:
            return 0
        j = int(math.floor((self.scale / self.cap) ** (1.0 / self.theta)))
        while j >= 1 and self.scale * j ** (-self.theta) <= self.cap:
            j -= 1
        while self.scale * (j + 1) ** (-self.theta) > self.cap:
            j += 1
        return j


@dataclass(frozen=True)
class Table:
    """Explicit values for ``m = 1..len(values)``, then an optional polynomial tail."""

    values: tuple[float, ...]
    tail: Polynomial | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if any(v < 0 for v in self.values):
            raise ValueError("table values must be nonnegative")


Decay = Union[FiniteRange, Polynomial, Table]


@dataclass(frozen=True)
class MixingProfile:
    """Certified bound profile for ``alpha_{1,tau}`` or ``rho_{1,tau}``."""

    kind: str
    tau: float
    decay: Decay

    def __post_init__(self):
        if self.kind not in ("alpha", "rho"):
            raise ValueError(f"profile kind must be 'alpha' or 'rho', got {self.kind!r}")
        if not (self.tau == INF or (float(self.tau).is_integer() and self.tau >= 1)):
            raise ValueError(f"tau must be a positive integer or inf, got {self.tau!r}")
        probe = np.arange(1, 257)
        vals = self.bound(probe)
        if np.any(np.diff(vals) > 0):
            raise ValueError("mixing bound must be nonincreasing in m")

    @property
    def trivial_bound(self) -> float:
        return 0.25 if self.kind == "alpha" else 1.0

    def bound(self, m):
        """Bound at distance ``m >= 1`` (scalar or array)."""
        ma = np.asarray(m, dtype=np.int64)
        if np.any(ma < 1):
            raise ValueError("mixing coefficients are indexed by m >= 1")
        dec = self.decay
        if isinstance(dec, FiniteRange):
            level = self.trivial_bound if dec.level is None else dec.level
            out = np.where(ma <= dec.m0, level, 0.0)
        elif isinstance(dec, Polynomial):
            out = dec.value(ma)
        else:
            n = len(dec.values)
            table = np.asarray(dec.values + (0.0,))
            inside = table[np.clip(ma - 1, 0, n)]
            tail = dec.tail.value(ma) if dec.tail is not None else np.zeros(ma.shape)
            out = np.where(ma <= n, inside, tail)
        out = np.asarray(out, dtype=np.float64)
        return float(out) if out.ndim == 0 else out

    def is_admissible(self) -> bool:
        """Whether the bound respects ``alpha <= 1/4`` (or ``rho <= 1``)."""
        return self.bound(1) <= self.trivial_bound

    # -- (de)serialization -------------------------------------------------

    def to_json(self) -> dict:
        dec = self.decay
        if isinstance(dec, FiniteRange):
            d = {"type": "finite_range", "m0": dec.m0}
            if dec.level is not None:
                d["level"] = dec.level
        elif isinstance(dec, Polynomial):
            d = _poly_json(dec)
        else:
            d = {"type": "table", "values": list(dec.values)}
            if dec.tail is not None:
                d["tail"] = _poly_json(dec.tail)
        return {"kind": self.kind, "tau": "inf" if self.tau == INF else int(self.tau), "decay": d}

    @classmethod
    def from_json(cls, obj: dict) -> MixingProfile:
        tau = obj.get("tau", "inf")
        tau = INF if tau in ("inf", "infinity", None) else int(tau)
        return cls(obj["kind"], tau, _decay_from_json(obj["decay"]))


def _poly_json(p: Polynomial) -> dict:
    d = {"type": "polynomial", "theta": p.theta}
    if p.scale != 1.0:
        d["scale"] = p.scale
    if p.cap is not None:
        d["cap"] = p.cap
    return d


def _decay_from_json(obj: dict) -> Decay:
    kind = obj.get("type")
    if kind == "finite_range":
        return FiniteRange(int(obj["m0"]), obj.get("level"))
    if kind == "polynomial":
        return Polynomial(float(obj["theta"]), float(obj.get("scale", 1.0)), obj.get("cap"))
    if kind == "table":
        tail = obj.get("tail")
        return Table(tuple(obj["values"]), _decay_from_json(tail) if tail else None)
    raise ValueError(f"unknown decay type {kind!r}")


def alpha_profile(decay: Decay, tau: float = INF) -> MixingProfile:
    return MixingProfile("alpha", tau, decay)


def rho_profile(decay: Decay, tau: float = INF) -> MixingProfile:
    return MixingProfile("rho", tau, decay)


# --------------------------------------------------------------------------
# lattice sums


def shell_count(d: int, m: int) -> int:
    """Number of sites ``i`` of ``Z^d`` with ``|i| = m`` (sup norm)."""
    if d < 1 or m < 1:
        raise ValueError("shell_count needs d >= 1 and m >= 1")
    n = (2 * m + 1) ** d - (2 * m - 1) ** d
    if n.bit_length() > 63:
        raise OverflowError(f"shell count for d={d}, m={m} exceeds 64-bit range")
    return n


def shell_polynomial(d: int) -> dict[int, int]:
    """Coefficients ``{r: c_r}`` with ``shell_count(d, j) = sum_r c_r j**r``."""
    # (2j+1)^d - (2j-1)^d keeps only the terms where d - r is odd
    return {r: 2 * math.comb(d, r) * 2**r for r in range(d) if (d - r) % 2 == 1}


@dataclass(frozen=True)
class SumCertificate:
    """Value of ``sum_{j > start} P(j) bound(j)`` with its audit trail.

    ``explicit`` is the finite part summed term by term; ``tail`` is the
    closed-form remainder and ``tail_bracket`` an integral-comparison
    interval that must contain it.
    """

    value: float
    explicit: float
    explicit_terms: int
    tail: float
    tail_bracket: tuple[float, float]
    rounding_error: float


def _hurwitz_bracket(s: float, start: int) -> tuple[float, float]:
    # integral comparison for sum_{j > start} j^-s, s > 1
    a = start + 1
    lo = a ** (1.0 - s) / (s - 1.0)
    return lo, lo + a ** (-s)


def _poly_sum(poly: dict[float, float], start: int, stop: int, bound) -> tuple[float, int]:
    if stop <= start:
        return 0.0, 0
    j = np.arange(start + 1, stop + 1, dtype=np.float64)
    weights = sum(c * j**p for p, c in poly.items())
    return math.fsum(weights * bound(j.astype(np.int64))), stop - start


def weighted_sum(profile: MixingProfile, poly: dict[float, float], start: int = 0) -> SumCertificate:
    """``sum_{j > start} P(j) * bound(j)`` for a polynomial ``P = {power: coeff}``.

    Raises :class:`NonSummableError` when the series diverges and
    :class:`CannotCertifyError` for tables without a tail descriptor.
    """
    dec = profile.decay
    top = max(poly) if poly else 0.0
    if isinstance(dec, FiniteRange):
        val, n = _poly_sum(poly, start, dec.m0, profile.bound)
        return SumCertificate(val, val, n, 0.0, (0.0, 0.0), 4 * np.finfo(float).eps * abs(val))
    if isinstance(dec, Table):
        if dec.tail is None:
            raise CannotCertifyError(
                "cannot certify: table profile has no tail descriptor beyond m="
                f"{len(dec.values)}")
        tail_poly = dec.tail
        explicit_stop = max(start, len(dec.values), tail_poly.cap_end())
    else:
        tail_poly = dec
        explicit_stop = max(start, tail_poly.cap_end())
    theta = tail_poly.theta
    if theta - top <= 1.0:
        raise NonSummableError(
            f"series diverges: terms decay like j^{top - theta:g} (need exponent < -1)")
    explicit, n = _poly_sum(poly, start, explicit_stop, profile.bound)
    tail = 0.0
    lo_b = hi_b = 0.0
    for p, c in poly.items():
        s = theta - p
        z = float(zeta(s, explicit_stop + 1))
        lo, hi = _hurwitz_bracket(s, explicit_stop)
        if not lo * (1 - 1e-12) <= z <= hi * (1 + 1e-12):
            raise ArithmeticError(f"zeta({s}, {explicit_stop + 1}) = {z} outside bracket [{lo}, {hi}]")
        tail += tail_poly.scale * c * z
        lo_b += tail_poly.scale * c * lo
        hi_b += tail_poly.scale * c * hi
    value = explicit + tail
    return SumCertificate(value, explicit, n, tail, (lo_b, hi_b),
                          16 * np.finfo(float).eps * abs(value))


def psi(profile: MixingProfile, d: int, m: int) -> float:
    """Mixing tail ``sum_{|i| > m} |i|^d bound(|i|)`` over ``i`` in ``Z^d``."""
    return psi_certificate(profile, d, m).value


def psi_certificate(profile: MixingProfile, d: int, m: int) -> SumCertificate:
    if d < 1 or m < 0:
        raise ValueError("psi needs d >= 1 and m >= 0")
    poly = {float(d + r): float(c) for r, c in shell_polynomial(d).items()}
    try:
        return weighted_sum(profile, poly, start=m)
    except NonSummableError as exc:
        raise NonSummableError(f"psi undefined for d={d}: {exc}") from None


# --------------------------------------------------------------------------
# blocking sequence


def _floor_root(y: float, n: int) -> int:
    """``floor(y ** (1/n))`` for ``y >= 0``.

    A root within 1e-12 (relative) of an integer is taken to be that integer,
    so that decimal inputs such as ``b = 1e-4`` behave as written rather
    than as their binary approximations.
    """
    if y < 0:
        raise ValueError("root of a negative number")
    if y == 0:
        return 0
    r = y ** (1.0 / n)
    near = round(r)
    if near >= 1 and abs(r - near) <= 1e-12 * r:
        return int(near)
    q = int(math.floor(r))
    yf = Fraction(y)
    while q > 0 and Fraction(q) ** n > yf:
        q -= 1
    while Fraction(q + 1) ** n <= yf:
        q += 1
    return q


@dataclass(frozen=True)
class BlockingSequence:
    d: int
    b_n: float
    v_n: int
    m_n: int
    psi_v: float
    tail: float

    @property
    def mdb(self) -> float:
        """``m_n^d * b_n``."""
        return self.m_n**self.d * self.b_n

    @property
    def tail_ratio(self) -> float:
        """``psi(m_n) / (m_n^d b_n)``."""
        return self.tail / self.mdb


def blocking_sequence(profile: MixingProfile, d: int, b_n: float,
                      variant: str = "sqrt") -> BlockingSequence:
    """Blocking length ``m_n`` balancing the bin width against the mixing tail.

    ``v_n = floor(b_n^(-1/(2d)))`` and
    ``m_n = max(v_n, floor((T / b_n)^(1/d)) + 1)`` where ``T = sqrt(psi(v_n))``
    (``variant="sqrt"``, the default) or ``T = psi(v_n)``
    (``variant="plain"``).  Only the square-root form makes
    ``psi(m_n) / (m_n^d b_n)`` vanish for every summable profile.
    """
    if not 0.0 < b_n < 1.0:
        raise ValueError(f"b_n must lie in (0, 1), got {b_n}")
    if variant not in ("sqrt", "plain"):
        raise ValueError("variant must be 'sqrt' or 'plain'")
    v = max(1, _floor_root(1.0 / b_n, 2 * d))
    psi_v = psi(profile, d, v)
    t = math.sqrt(psi_v) if variant == "sqrt" else psi_v
    m = max(v, _floor_root(t / b_n, d) + 1)
    return BlockingSequence(d, float(b_n), v, m, psi_v, psi(profile, d, m))


@dataclass
class Lemma1Diagnostic:
    """Rows ``(b, v_n, m_n, m_n^d b, psi(m_n)/(m_n^d b))`` plus trend flags."""

    rows: list[BlockingSequence]
    trends: dict[str, dict] = field(default_factory=dict)

    def table(self) -> list[dict]:
        return [
            {"b": r.b_n, "v_n": r.v_n, "m_n": r.m_n, "m_n^d*b": r.mdb, "tail_ratio": r.tail_ratio}
            for r in self.rows
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["b", "v_n", "m_n", "mdb", "tail_ratio"])
        for r in self.rows:
            w.writerow([repr(r.b_n), r.v_n, r.m_n, repr(r.mdb), repr(r.tail_ratio)])
        return buf.getvalue()


def _trend(values: Sequence[float], increasing: bool) -> dict:
    pairs = list(zip(values, values[1:]))
    if increasing:
        weak = all(b >= a for a, b in pairs)
        strict = all(b > a for a, b in pairs)
    else:
        weak = all(b <= a for a, b in pairs)
        strict = all(b < a for a, b in pairs)
    return {"direction": "increasing" if increasing else "decreasing",
            "monotone": weak, "strict": strict, "final": values[-1]}


def lemma1_diagnostic(profile: MixingProfile, d: int, b_schedule: Sequence[float],
                      variant: str = "sqrt") -> Lemma1Diagnostic:
    """Evaluate the blocking sequence over a decreasing bin-width schedule.

    Reports whether ``m_n`` grows and ``m_n^d b_n`` and the tail ratio shrink
    along the schedule.  These are finite trends, not limits.
    """
    b_schedule = [float(b) for b in b_schedule]
    if not b_schedule:
        raise ValueError("empty bin-width schedule")
    if any(b2 >= b1 for b1, b2 in zip(b_schedule, b_schedule[1:])):
        raise ValueError("bin-width schedule must be strictly decreasing")
    # summability first, so that nothing is produced for a bad profile
    weighted_sum(profile, {float(2 * d - 1): 1.0})
    rows = [blocking_sequence(profile, d, b, variant) for b in b_schedule]
    trends = {
        "m_n": _trend([r.m_n for r in rows], increasing=True),
        "m_n^d*b": _trend([r.mdb for r in rows], increasing=False),
        "tail_ratio": _trend([r.tail_ratio for r in rows], increasing=False),
    }
    return Lemma1Diagnostic(rows, trends)


# --------------------------------------------------------------------------
# hypotheses of the variance limit and the CLT

THEOREMS = {
    # id: (profile kind, requires tau = inf, power of m as a function of d)
    # prop1_* gate the variance limit, thm1_* the joint CLT; *_i use alpha, *_ii rho
    "prop1_i": ("alpha", False, lambda d: 2 * d - 1),
    "prop1_ii": ("rho", False, lambda d: d - 1),
    "thm1_i": ("alpha", True, lambda d: 2 * d - 1),
    "thm1_ii": ("rho", True, lambda d: d - 1),
}


@dataclass(frozen=True)
class HypothesisResult:
    holds: bool
    theorem: str
    value: float | None
    certificate: dict

    def to_json(self) -> dict:
        return {"theorem": self.theorem, "holds": self.holds, "sum": self.value,
                "certificate": self.certificate}


def hypothesis_check(profile: MixingProfile, d: int, theorem: str) -> HypothesisResult:
    """Check the mixing-rate summability condition of the named result.

    ``prop1_*`` use ``tau = 1`` coefficients; a ``tau = inf`` profile also
    bounds those, so it is accepted.  ``thm1_*`` require ``tau = inf``.
    """
    try:
        kind, need_inf, power = THEOREMS[theorem]
    except KeyError:
        raise ValueError(f"unknown theorem {theorem!r}; choose one of {sorted(THEOREMS)}") from None
    if profile.kind != kind:
        raise ValueError(f"{theorem} needs a {kind} profile, got {profile.kind}")
    if need_inf and profile.tau != INF:
        raise ValueError(f"{theorem} needs tau = inf coefficients, got tau = {profile.tau}")
    e = power(d)
    try:
        cert = weighted_sum(profile, {float(e): 1.0})
    except NonSummableError as exc:
        dec = profile.decay
        theta = dec.tail.theta if isinstance(dec, Table) else dec.theta
        partial = {}
        for k in range(1, 7):
            n = 10**k
            partial[str(n)] = _poly_sum({float(e): 1.0}, 0, n, profile.bound)[0]
        witness = {
            "reason": str(exc),
            "term_exponent": e - theta,
            "partial_sums": partial,
        }
        return HypothesisResult(False, theorem, None, witness)
    return HypothesisResult(True, theorem, cert.value, {
        "series": f"sum_(m>=1) m^{e} {kind}(m)",
        "explicit_part": cert.explicit,
        "explicit_terms": cert.explicit_terms,
        "tail": cert.tail,
        "tail_bracket": list(cert.tail_bracket),
        "rounding_error": cert.rounding_error,
    })
