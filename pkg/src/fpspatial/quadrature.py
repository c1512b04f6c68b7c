"""Adaptive Simpson quadrature."""

from __future__ import annotations

import math
from typing import Callable


class QuadratureError(RuntimeError):
    """Raised when the requested tolerance was not reached.

    ``achieved`` holds the error estimate that was actually obtained.
    """

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 60,
) -> tuple[float, float]:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Returns ``(value, error_estimate)``.  Raises :class:`QuadratureError` if
    some subinterval still fails the local tolerance at ``max_depth``.
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integration limits must be finite")
    if a == b:
        return 0.0, 0.0
    if a > b:
        value, err = adaptive_simpson(f, b, a, tol, max_depth)
        return -value, err

    failed = []

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = f(lm)
        frm = f(rm)
        h = hi - lo
        left = h / 12.0 * (flo + 4.0 * flm + fmid)
        right = h / 12.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - whole
        if abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0, abs(delta) / 15.0
        if depth >= max_depth or mid in (lo, hi):
            failed.append(abs(delta) / 15.0)
            return left + right + delta / 15.0, abs(delta) / 15.0
        lv, le = recurse(lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1)
        rv, re = recurse(mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1)
        return lv + rv, le + re

    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    value, err = recurse(a, b, fa, fm, fb, whole, tol, 0)
    if failed:
        raise QuadratureError("adaptive Simpson did not converge", err)
    return value, err
