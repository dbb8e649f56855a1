"""Small scalar numerics: adaptive Simpson quadrature and golden-section search."""

from __future__ import annotations

import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class QuadratureError(ArithmeticError):
    pass


class OptimizerError(ArithmeticError):
    pass


def adaptive_simpson(fn, a: float, b: float, rel_tol: float = 1e-9,
                     max_depth: int = 48, abs_floor: float = 1e-300) -> float:
    """Integrate ``fn`` over ``[a, b]`` (``b < a`` gives the negated integral)."""
    if a == b:
        return 0.0
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # absolute target from a coarse magnitude estimate of the integrand
    scale = abs(b - a) * max(abs(fa), abs(fm), abs(fb))
    tol = max(rel_tol * scale, abs_floor)
    # pieces narrower than this cannot matter at the requested accuracy,
    # which keeps integrable endpoint singularities (sqrt at 0) from failing
    min_width = 1e-12 * abs(b - a)
    return _simpson(fn, a, b, fa, fm, fb, whole, tol, max_depth, min_width)


def _simpson(fn, a, b, fa, fm, fb, whole, tol, depth, min_width):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = fn(lm), fn(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol or abs(b - a) <= min_width:
        return left + right + delta / 15.0
    if depth <= 0:
        raise QuadratureError(f"adaptive Simpson did not reach tolerance on [{a}, {b}]")
    return (_simpson(fn, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, min_width)
            + _simpson(fn, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, min_width))


def golden_section_max(fn, lo: float, hi: float, rel_tol: float = 1e-9,
                       max_iter: int = 200) -> float:
    """Maximiser of a unimodal ``fn`` on ``[lo, hi]`` (endpoints included)."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise OptimizerError(f"invalid bracket [{lo}, {hi}]")
    if hi == lo:
        return lo
    tol = rel_tol * (hi - lo)
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fn(d)
    best = c if fc >= fd else d
    best_val = max(fc, fd)
    for edge in (lo, hi):
        v = fn(edge)
        if v > best_val:
            best, best_val = edge, v
    return best
