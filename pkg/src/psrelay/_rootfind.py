"""Bracketed scalar root finding shared by both solvers.

Every dual search in this package reduces to the same pattern: a function
that is positive at a known lower endpoint and eventually negative, whose
root is pinned down by geometric bracket expansion followed by bisection.
The power-splitting ratio itself is found the same way, as the root of
eps_star(eps) - eps.
"""

from __future__ import annotations

from .errors import DualBracketError

_MAX_EXPAND = 200


def expand_until_negative(f, lo, *, start=None, factor=2.0, max_steps=_MAX_EXPAND):
    """Walk right from ``lo`` (where f > 0) until f turns <= 0.

    The step starts at ``start`` (default: the magnitude of ``lo``) and is
    multiplied by ``factor`` each time; ``factor=1.0`` gives plain
    additive stepping.  Returns ``(hi, f_hi)``.
    """
    if start is None:
        start = max(abs(lo), 1e-4)
    delta = start
    hi = lo
    for _ in range(max_steps):
        hi = hi + delta
        delta *= factor
        f_hi = f(hi)
        if f_hi <= 0.0:
            return hi, f_hi
    raise DualBracketError(
        f"no sign change found while expanding from {lo!r} after {max_steps} steps"
    )


def bisect_bracket(f, lo, hi, f_lo, f_hi, *, f_tol=0.0, width_rel=1e-15,
                   max_iter=200):
    """Shrink a bracket with f(lo) > 0 >= f(hi) by bisection.

    Stops once either endpoint satisfies ``|f| <= f_tol`` or the bracket
    width falls below ``width_rel`` relative to its location.  Returns the
    final ``(lo, f_lo, hi, f_hi)`` so callers can pick the side they need.
    """
    if not (f_lo > 0.0 >= f_hi):
        raise ValueError("bisect_bracket requires f(lo) > 0 >= f(hi)")
    for _ in range(max_iter):
        if min(abs(f_lo), abs(f_hi)) <= f_tol:
            break
        if hi - lo <= width_rel * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # width below float resolution
            break
        f_mid = f(mid)
        if f_mid > 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return lo, f_lo, hi, f_hi


def best_endpoint(lo, f_lo, hi, f_hi):
    """Endpoint of a bisected bracket with the smaller |f|."""
    return (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)


def solve_eps_fixed_point(eps_star, *, mode="fixed_point", eps_tol=1e-3,
                          sweep_step=1e-3, eps_init=1e-3, damping=0.5,
                          max_iter=1000, polish=True, polish_width=1e-14):
    """Locate a fixed point of the split-ratio update map eps -> eps_star(eps).

    ``eps_star`` receives a split ratio in (0, 1) and returns the unclamped
    updated ratio.  Two search modes are supported:

    * ``"sweep"``   - scan eps upward from ``eps_init`` in ``sweep_step``
      increments and stop at the first point with |eps_star - eps| <= eps_tol.
    * ``"fixed_point"`` - damped iteration eps <- eps + damping*(eps_star - eps)
      from ``eps_init`` with the same stop rule.

    With ``polish=True`` the loose stopping point is refined: a sign change
    of h(eps) = eps_star(eps) - eps is bracketed among the visited points
    (probing outward when necessary) and bisected down to ``polish_width``.

    Returns ``(eps, converged, n_evals)``.
    """
    if mode not in ("sweep", "fixed_point"):
        raise ValueError(f"unknown eps search mode {mode!r}")
    hi_clip = 1.0 - 1e-9
    evals: list[tuple[float, float]] = []

    def h(e):
        val = eps_star(e) - e
        evals.append((e, val))
        return val

    converged = False
    bracketed = False
    if mode == "sweep":
        e = eps_init
        while e < 1.0 and len(evals) < max_iter:
            he = h(e)
            if abs(he) <= eps_tol:
                converged = True
                break
            e += sweep_step
    else:
        e = eps_init
        seen_pos = seen_neg = False
        for _ in range(max_iter):
            he = h(e)
            if abs(he) <= eps_tol:
                converged = True
                break
            seen_pos = seen_pos or he > 0.0
            seen_neg = seen_neg or he < 0.0
            if seen_pos and seen_neg:
                bracketed = True  # a sign change exists; bisection takes over
                break
            e = min(max(e + damping * he, 1e-9), hi_clip)

    if not polish and not bracketed:
        best_e, best_h = min(evals, key=lambda p: abs(p[1]))
        return best_e, converged or abs(best_h) <= eps_tol, len(evals)

    bracket = _first_sign_change(evals)
    if bracket is None and converged:
        # probe outward from the stopping point for a sign change
        e0 = evals[-1][0]
        delta = max(eps_tol, 1e-6)
        while delta <= 0.2 and bracket is None:
            for cand in (e0 - delta, e0 + delta):
                if 1e-9 < cand < hi_clip:
                    h(cand)
            bracket = _first_sign_change(evals)
            delta *= 2.0
    if bracket is None and not converged:
        # the iterates never straddled the root; scan for a crossing
        for cand in [k / 64.0 for k in range(1, 64)]:
            h(cand)
        bracket = _first_sign_change(evals)
    if bracket is not None:
        lo, f_lo, hi, f_hi = bracket
        lo, f_lo, hi, f_hi = bisect_bracket(
            h, lo, hi, f_lo, f_hi, width_rel=polish_width, max_iter=200)
        e_fin, _ = best_endpoint(lo, f_lo, hi, f_hi)
        return e_fin, True, len(evals)
    if converged:  # tangential fixed point: accept the loose stop
        return evals[-1][0], True, len(evals)
    best_e, best_h = min(evals, key=lambda p: abs(p[1]))
    return best_e, False, len(evals)


def _first_sign_change(evals):
    """Smallest-eps adjacent pair (by eps order) with h going + -> -."""
    pts = sorted(evals)
    for (e0, h0), (e1, h1) in zip(pts, pts[1:]):
        if h0 > 0.0 >= h1:
            return e0, h0, e1, h1
    return None
