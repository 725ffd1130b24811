"""Joint source / relay / split-ratio solver.

The source mode powers q, the relay-side allocations d and the split
ratio eps are optimized by alternating two subproblems: (A) with q fixed,
find (d, eps) by the same dual water-filling / eps fixed-point scheme used
for uniform precoding; (B) with (d, eps) fixed, recover q through a nested
dual search, an outer bisection enforcing the source power budget and an
inner one enforcing the harvested-energy constraint.  The alternation is
monotone in capacity and stops once the gain per round drops below a
threshold; a Newton refinement (on by default) then drives every
first-order optimality residual down to machine precision and doubles as
the escape from stalls where the two tight coupling constraints pin q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._linalg import matrix_capacity
from ._rootfind import (best_endpoint, bisect_bracket, expand_until_negative,
                        solve_eps_fixed_point)
from .channel import ChannelPair, EigenSystem, SystemParams
from .errors import (DegenerateBudgetError, DualBracketError,
                     InfeasibleSubproblemError)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class JointProblem:
    """Eigenmode gains plus the raw powers of the joint-design case."""

    alpha: tuple
    beta: tuple
    p_source: float
    sigma1_sq: float
    sigma2_sq: float
    eta: float

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.asarray(self.alpha, dtype=float))
        beta = tuple(float(b) for b in np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if len(alpha) != len(beta) or not alpha:
            raise ValueError("alpha and beta must be nonempty and of equal length")
        if any(a < 0 for a in alpha) or any(b < 0 for b in beta):
            raise ValueError("eigenmode gains must be nonnegative")
        if self.p_source < 0 or self.sigma1_sq <= 0 or self.sigma2_sq <= 0:
            raise ValueError("p_source must be nonnegative and noise powers positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    @property
    def d(self) -> int:
        return len(self.alpha)

    @classmethod
    def from_eigensystem(cls, eig: EigenSystem, params: SystemParams) -> "JointProblem":
        return cls(alpha=eig.alpha, beta=eig.beta, p_source=params.p_source,
                   sigma1_sq=params.sigma1_sq, sigma2_sq=params.sigma2_sq,
                   eta=params.eta)


@dataclass(frozen=True)
class JointOptions:
    """Alternation, eps-search and dual-search knobs."""

    cap_tol: float = 1e-3          # capacity change per outer round
    max_outer: int = 500
    eps_mode: str = "fixed_point"  # eps search inside subproblem A
    eps_tol: float = 1e-3
    sweep_step: float = 1e-3
    eps_init: float = 1e-3
    damping: float = 0.5
    eps_max_iter: int = 1000
    dual_rel_tol: float = 1e-9     # constraint residual target, relative
    additive_expansion: bool = False  # bracket growth by a fixed 1e-4 step
    kkt_polish: bool = True        # Newton refinement of the final point
    kkt_stat_tol: float = 5e-10
    kkt_max_newton: int = 60
    ascent_trigger: float = 1e-6   # normalized q-residual that flags a stall
    face_ascent_iters: int = 40


@dataclass(frozen=True, eq=False)
class JointSolution:
    q: np.ndarray
    d: np.ndarray
    eps: float
    nu1: float
    nu2: float
    capacity: float
    converged: bool
    n_outer: int
    capacity_history: tuple
    # one entry per half-step: (sum(q) - P, harvest slack, eps, min(q), min(d))
    feasibility_history: tuple = ()
    polished: bool = False


class SubproblemAResult(NamedTuple):
    d: np.ndarray
    eps: float
    mu: float
    converged: bool


def scalar_rate_joint(q, d, eps: float, prob: JointProblem) -> float:
    """Rate in bits per channel use for mode powers q and relay levels d.

    Per mode the end-to-end SNR is A*B/(1+A+B) with A = (1-eps)*alpha_k*q_k/sigma1^2
    and B = beta_k*d_k/sigma2^2.
    """
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    if q.shape != (prob.d,) or d.shape != (prob.d,):
        raise ValueError(f"q and d must both have length {prob.d}")
    if np.any(q < 0) or np.any(d < 0):
        raise ValueError("allocations must be nonnegative")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    total = 0.0
    for k in range(prob.d):
        a_lev = (1.0 - eps) * prob.alpha[k] * float(q[k]) / prob.sigma1_sq
        b_lev = prob.beta[k] * float(d[k]) / prob.sigma2_sq
        total += math.log2(1.0 + a_lev * b_lev / (1.0 + a_lev + b_lev))
    return 0.5 * total


def _level_allocation(a_lev: float, b_unit: float, mu: float) -> float:
    """Positive-part water-filling level (shared quadratic inversion).

    Solves (1+y)(1+a_lev+y) = a_lev*b_unit*mu/ (ln2/2)... with y = b_unit*value,
    in the cancellation-free square-root form.
    """
    if a_lev <= 0.0 or b_unit <= 0.0:
        return 0.0
    t = (2.0 / LN2) * a_lev * b_unit * mu
    num = t / (math.sqrt(a_lev * a_lev + t) + a_lev) - 2.0
    if num <= 0.0:
        return 0.0
    return num / (2.0 * b_unit)


def optimal_d(mu: float, eps: float, q, prob: JointProblem) -> np.ndarray:
    """Relay-side water-filling levels for dual value mu at fixed (eps, q).

    A mode with q_k = 0 carries no first-hop signal and gets d_k = 0.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    q = np.asarray(q, dtype=float)
    out = np.zeros(prob.d)
    for k in range(prob.d):
        a_lev = (1.0 - eps) * prob.alpha[k] * float(q[k]) / prob.sigma1_sq
        out[k] = _level_allocation(a_lev, prob.beta[k] / prob.sigma2_sq, mu)
    return out


def _dual_gap_joint(mu: float, eps: float, q_list, prob: JointProblem,
                    harvest: float) -> float:
    """eps-stationarity gap for the relay-side dual; positive below the root."""
    s = 0.0
    c1 = (1.0 - eps) / prob.sigma1_sq
    for k in range(prob.d):
        cq = prob.alpha[k] * q_list[k] / prob.sigma1_sq
        a_lev = c1 * prob.alpha[k] * q_list[k]
        b_unit = prob.beta[k] / prob.sigma2_sq
        lev = _level_allocation(a_lev, b_unit, mu)
        if lev > 0.0:
            b_lev = b_unit * lev
            s += cq * b_lev / ((1.0 + a_lev) * (1.0 + a_lev + b_lev))
    return harvest / mu - s / (2.0 * LN2)


def dual_root_joint(eps: float, q, prob: JointProblem, tol: float | None = None) -> float:
    """Dual value mu* at which the relay-side eps-stationarity gap vanishes.

    Bracket construction mirrors the uniform-precoding case: the lower
    endpoint is the smallest per-mode activation threshold, the upper one
    comes from geometric expansion.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    if prob.eta <= 0.0:
        raise DegenerateBudgetError("eta = 0: harvested budget is zero")
    if eps == 0.0:
        raise DegenerateBudgetError("eps = 0: harvested budget is zero")
    q_list = [float(v) for v in np.asarray(q, dtype=float)]
    if any(v < 0 for v in q_list):
        raise ValueError("q must be nonnegative")
    harvest = prob.eta * sum(a * v for a, v in zip(prob.alpha, q_list))
    if harvest <= 0.0:
        raise DegenerateBudgetError("all q_k = 0: nothing transmitted")
    lo = math.inf
    for k in range(prob.d):
        a_lev = (1.0 - eps) * prob.alpha[k] * q_list[k] / prob.sigma1_sq
        b_unit = prob.beta[k] / prob.sigma2_sq
        if a_lev > 0.0 and b_unit > 0.0:
            lo = min(lo, 2.0 * LN2 * (1.0 + a_lev) / (a_lev * b_unit))
    if not math.isfinite(lo):
        raise DegenerateBudgetError("no eigenmode carries gain on both hops")

    def gap(mu):
        return _dual_gap_joint(mu, eps, q_list, prob, harvest)

    f_lo = gap(lo)
    hi, f_hi = expand_until_negative(gap, lo)
    f_tol = 0.0 if tol is None else tol
    lo, f_lo, hi, f_hi = bisect_bracket(gap, lo, hi, f_lo, f_hi, f_tol=f_tol)
    mu, _ = best_endpoint(lo, f_lo, hi, f_hi)
    return mu


def eps_update_joint(d, q, prob: JointProblem) -> float:
    """Split ratio that makes the harvested-energy constraint exactly tight."""
    d = np.asarray(d, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(d < 0) or np.any(q < 0):
        raise ValueError("allocations must be nonnegative")
    denom = prob.eta * float(np.dot(prob.alpha, q))
    if denom <= 0.0:
        raise DegenerateBudgetError("harvested budget is zero (eta or alpha.q vanish)")
    return min(max(float(d.sum()) / denom, 0.0), 1.0)


def subproblem_a(q, prob: JointProblem, opts: JointOptions | None = None,
                 eps_init: float | None = None,
                 polish_width: float = 1e-14) -> SubproblemAResult:
    """Optimal (d, eps) for fixed source powers q.

    Runs the same eps fixed-point scheme as the uniform-precoding solver on
    the joint-case update maps.  Returns zeros for a silent source.
    """
    opts = opts or JointOptions()
    q = np.asarray(q, dtype=float)
    harvest_gain = prob.eta * float(np.dot(prob.alpha, q))
    if harvest_gain <= 0.0:
        return SubproblemAResult(np.zeros(prob.d), 0.0, math.inf, True)
    active = any(prob.alpha[k] * q[k] > 0 and prob.beta[k] > 0 for k in range(prob.d))
    if not active:
        return SubproblemAResult(np.zeros(prob.d), 0.0, math.inf, True)

    def eps_star(e):
        mu = dual_root_joint(e, q, prob)
        d = optimal_d(mu, e, q, prob)
        return float(d.sum()) / harvest_gain

    eps_fin, converged, _ = solve_eps_fixed_point(
        eps_star, mode=opts.eps_mode, eps_tol=opts.eps_tol,
        sweep_step=opts.sweep_step, eps_init=eps_init or opts.eps_init,
        damping=opts.damping, max_iter=opts.eps_max_iter,
        polish_width=polish_width)
    mu = dual_root_joint(eps_fin, q, prob)
    d = optimal_d(mu, eps_fin, q, prob)
    eps_rep = eps_update_joint(d, q, prob)
    return SubproblemAResult(d, eps_rep, mu, converged)


def _waterfill_d(budget: float, eps: float, q, prob: JointProblem):
    """Spend exactly ``budget`` on the relay-side levels at fixed (eps, q).

    Used as a monotonicity safeguard: unlike subproblem A this does not move
    eps, it only refreshes d for the current budget.  Returns (d, mu).
    """
    q = np.asarray(q, dtype=float)
    if budget <= 0.0:
        return np.zeros(prob.d), math.inf
    lo = math.inf
    for k in range(prob.d):
        a_lev = (1.0 - eps) * prob.alpha[k] * float(q[k]) / prob.sigma1_sq
        b_unit = prob.beta[k] / prob.sigma2_sq
        if a_lev > 0.0 and b_unit > 0.0:
            lo = min(lo, 2.0 * LN2 * (1.0 + a_lev) / (a_lev * b_unit))
    if not math.isfinite(lo):
        return np.zeros(prob.d), math.inf

    def gap(mu):  # budget minus spend: positive below the root
        return budget - float(optimal_d(mu, eps, q, prob).sum())

    f_lo = gap(lo)
    hi, f_hi = expand_until_negative(gap, lo)
    lo, f_lo, hi, f_hi = bisect_bracket(gap, lo, hi, f_lo, f_hi)
    mu, _ = best_endpoint(lo, f_lo, hi, f_hi)
    return optimal_d(mu, eps, q, prob), mu


def optimal_q(nu1: float, nu2: float, eps: float, d, prob: JointProblem) -> np.ndarray:
    """Source mode powers balancing the two duals nu1 (power) and nu2 (harvest).

    Each mode sees its own effective dual nu_hat_k = 2*(nu1 - nu2*eps*eta*alpha_k).
    A mode with d_k = 0 gets q_k = 0; a mode whose nu_hat_k <= 0 cannot be
    balanced at any finite power and is reported as ``inf`` so the enclosing
    bisection can shrink its bracket.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    d = np.asarray(d, dtype=float)
    out = np.zeros(prob.d)
    for k in range(prob.d):
        if d[k] <= 0.0 or prob.alpha[k] <= 0.0:
            continue
        nu_hat = 2.0 * (nu1 - nu2 * eps * prob.eta * prob.alpha[k])
        if nu_hat <= 0.0:
            out[k] = math.inf
            continue
        mu_hat = 1.0 / nu_hat
        c_unit = (1.0 - eps) * prob.alpha[k] / prob.sigma1_sq
        b_lev = prob.beta[k] * float(d[k]) / prob.sigma2_sq
        t = (4.0 / LN2) * c_unit * b_lev * mu_hat
        num = t / (math.sqrt(b_lev * b_lev + t) + b_lev) - 2.0
        out[k] = num / (2.0 * c_unit) if num > 0.0 else 0.0
    return out


def _mode_phi(eps: float, d, prob: JointProblem) -> list:
    """Marginal rate of each mode power at q_k = 0 (dual activation levels)."""
    d = np.asarray(d, dtype=float)
    phi = []
    for k in range(prob.d):
        num = (1.0 - eps) * prob.alpha[k] * prob.beta[k] * float(d[k])
        den = 2.0 * prob.sigma1_sq * LN2 * (prob.sigma2_sq + prob.beta[k] * float(d[k]))
        phi.append(num / den if den > 0 else 0.0)
    return phi


def dual_decomposition_q(d, eps: float, prob: JointProblem,
                         opts: JointOptions | None = None):
    """Recover the source powers for fixed (d, eps) via nested dual bisection.

    The outer search on nu1 drives sum(q) to the power budget; for each
    trial nu1 the inner search on nu2 drives the harvested-energy slack to
    zero (or returns nu2 = 0 when the constraint is already slack).  Bracket
    ends grow geometrically from the activation levels; ``additive_expansion``
    switches the bracket growth to plain 1e-4 additive stepping.

    Returns ``(q, nu1, nu2)`` with both constraint residuals within
    ``opts.dual_rel_tol`` relative and sum(q) <= P, harvest slack >= 0.
    """
    opts = opts or JointOptions()
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("d must be nonnegative")
    if not 0.0 < eps < 1.0:
        raise ValueError("dual decomposition needs eps strictly inside (0, 1)")
    if prob.eta <= 0.0:
        raise DegenerateBudgetError("eta = 0: harvested budget is zero")
    d_total = float(d.sum())
    if d_total <= 0.0:
        raise DegenerateBudgetError("sum(d) = 0: relay spends no power")
    p_budget = prob.p_source
    alpha_active = max((prob.alpha[k] for k in range(prob.d) if d[k] > 0.0),
                       default=0.0)
    if eps * prob.eta * alpha_active * p_budget < d_total * (1.0 - 1e-12):
        raise InfeasibleSubproblemError(
            "requested relay spend exceeds the harvest available at full source power")

    grow = 1.0 if opts.additive_expansion else 2.0
    # constant 1e-4 stepping needs far more iterations to cover a bracket
    expand_cap = 500_000 if opts.additive_expansion else 200
    rel_tol = opts.dual_rel_tol
    phi = _mode_phi(eps, d, prob)

    def harvest_slack(q):
        tot = 0.0
        for k in range(prob.d):
            if q[k] == math.inf:
                return math.inf
            tot += prob.alpha[k] * q[k]
        return eps * prob.eta * tot - d_total

    def inner(nu1: float, rel: float):
        """Best q for this nu1: nu2 from complementary slackness.

        Returns the nonnegative-slack side of the harvest constraint, with
        relative slack at most ``rel`` when the constraint is active.
        """
        q0 = optimal_q(nu1, 0.0, eps, d, prob)
        g0 = harvest_slack(q0)
        if g0 >= 0.0:
            return q0, 0.0
        theta = [(nu1 - phi[k]) / (prob.eta * eps * prob.alpha[k])
                 for k in range(prob.d) if d[k] > 0.0 and prob.alpha[k] > 0.0]
        lo = max(0.0, min(theta))
        hi, g_hi = lo, g0 if lo == 0.0 else harvest_slack(optimal_q(nu1, lo, eps, d, prob))
        delta = 1e-4 if opts.additive_expansion else max(1e-4, abs(lo) * 1e-4)
        for _ in range(expand_cap):
            cand = hi + delta
            delta *= grow
            g_cand = harvest_slack(optimal_q(nu1, cand, eps, d, prob))
            if g_cand > 0.0:
                lo, hi, g_hi = hi, cand, g_cand
                break
            hi = cand
        else:
            raise DualBracketError("inner dual bracket expansion exhausted")
        for _ in range(300):
            if math.isfinite(g_hi) and g_hi <= rel * d_total:
                break
            if hi - lo <= 1e-16 * max(1.0, hi):
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            g_mid = harvest_slack(optimal_q(nu1, mid, eps, d, prob))
            if g_mid <= 0.0:
                lo = mid
            else:
                hi, g_hi = mid, g_mid
        q_fin = optimal_q(nu1, hi, eps, d, prob)
        if not math.isfinite(harvest_slack(q_fin)):  # width collapsed onto the pole
            q_fin = optimal_q(nu1, lo, eps, d, prob)
            return q_fin, lo
        return q_fin, hi

    def total_power(nu1):
        q, nu2 = inner(nu1, rel_tol)
        return float(np.sum(q)), (q, nu2)

    def finish(nu1, payload):
        """Tighten the harvest side until the power overshoot is negligible."""
        q, nu2 = payload
        if float(np.sum(q)) > p_budget:
            q, nu2 = inner(nu1, 1e-14)
        return np.asarray(q), nu1, nu2

    near = 10.0 * rel_tol * p_budget
    nu1_lo = nu1_hi = max(phi)
    s, payload = total_power(nu1_lo)
    if abs(s - p_budget) <= near:
        # the harvest constraint pins sum(q) at the budget for any nu1
        return finish(nu1_lo, payload)
    if s > p_budget:
        delta = 1e-4 if opts.additive_expansion else max(1e-4, nu1_hi * 1e-4)
        for _ in range(expand_cap):
            nu1_hi = nu1_hi + delta
            delta *= grow
            s_hi, payload_hi = total_power(nu1_hi)
            if s_hi <= p_budget + near:
                break
        else:
            raise DualBracketError("outer dual bracket expansion exhausted")
    else:
        payload_hi = payload
        for _ in range(200):
            nu1_lo = 0.5 * nu1_lo
            s_lo, payload_lo = total_power(nu1_lo)
            if s_lo >= p_budget - near:
                break
        else:
            raise DualBracketError("outer dual bracket cannot reach the power budget")
        if s_lo <= p_budget + near:  # landed directly on the pinned plateau
            return finish(nu1_lo, payload_lo)

    # invariant from here on: sum(q(nu1_lo)) >= P >= sum(q(nu1_hi)) - near
    for _ in range(200):
        s_hi_val = float(np.sum(payload_hi[0]))
        if p_budget - s_hi_val <= rel_tol * p_budget:
            break
        if nu1_hi - nu1_lo <= 1e-15 * max(1.0, nu1_hi):
            break
        mid = 0.5 * (nu1_lo + nu1_hi)
        if mid <= nu1_lo or mid >= nu1_hi:
            break
        s_mid, payload_mid = total_power(mid)
        if s_mid >= p_budget:
            nu1_lo = mid
        else:
            nu1_hi, payload_hi = mid, payload_mid
    return finish(nu1_hi, payload_hi)


def power_residual(q, prob: JointProblem) -> float:
    """sum(q) - P (negative means slack in the source budget)."""
    return float(np.sum(q)) - prob.p_source


def harvest_residual(q, d, eps: float, prob: JointProblem) -> float:
    """eps*eta*sum(alpha.q) - sum(d) (negative means the constraint is violated)."""
    return eps * prob.eta * float(np.dot(prob.alpha, q)) - float(np.sum(d))


def d_stationarity_residuals(q, d, eps: float, nu2: float,
                             prob: JointProblem) -> np.ndarray:
    """Gap of the relay-side first-order condition on active modes (d_k > 0)."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.zeros(prob.d)
    for k in range(prob.d):
        if d[k] <= 0.0:
            continue
        a_lev = (1.0 - eps) * prob.alpha[k] * float(q[k]) / prob.sigma1_sq
        b_unit = prob.beta[k] / prob.sigma2_sq
        b_lev = b_unit * float(d[k])
        marginal = b_unit * a_lev / (2.0 * LN2 * (1.0 + b_lev) * (1.0 + a_lev + b_lev))
        out[k] = marginal - nu2
    return out


def q_stationarity_residuals(q, d, eps: float, nu1: float, nu2: float,
                             prob: JointProblem) -> np.ndarray:
    """Gap of the source-side first-order condition on active modes (q_k > 0)."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.zeros(prob.d)
    for k in range(prob.d):
        if q[k] <= 0.0:
            continue
        c_unit = (1.0 - eps) * prob.alpha[k] / prob.sigma1_sq
        a_lev = c_unit * float(q[k])
        b_lev = prob.beta[k] * float(d[k]) / prob.sigma2_sq
        marginal = c_unit * b_lev / (2.0 * LN2 * (1.0 + a_lev) * (1.0 + a_lev + b_lev))
        out[k] = marginal - nu1 + nu2 * eps * prob.eta * prob.alpha[k]
    return out


def eps_stationarity_residual(q, d, eps: float, nu2: float, prob: JointProblem) -> float:
    """Gap of the split-ratio first-order condition."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    s = 0.0
    for k in range(prob.d):
        cq = prob.alpha[k] * float(q[k]) / prob.sigma1_sq
        a_lev = (1.0 - eps) * cq
        b_lev = prob.beta[k] * float(d[k]) / prob.sigma2_sq
        s += cq * b_lev / ((1.0 + a_lev) * (1.0 + a_lev + b_lev))
    return nu2 * prob.eta * float(np.dot(prob.alpha, q)) - s / (2.0 * LN2)


def _zero_solution(prob: JointProblem, converged: bool = True) -> JointSolution:
    return JointSolution(q=np.zeros(prob.d), d=np.zeros(prob.d), eps=0.0,
                         nu1=0.0, nu2=0.0, capacity=0.0, converged=converged,
                         n_outer=0, capacity_history=(), feasibility_history=())


def _newton_polish(q, d, eps, nu1, nu2, prob: JointProblem, opts: JointOptions):
    """Drive the stationarity system to machine precision around the
    alternation's answer, with the active sets frozen.

    Returns the refined (q, d, eps, nu1, nu2) or None when the refinement
    fails to meet the residual targets or leaves the feasible region.
    """
    q = np.array(q, dtype=float)
    d = np.array(d, dtype=float)
    q_scale = prob.p_source / prob.d
    d_scale = max(float(d.sum()) / prob.d, 1e-300)
    act_q = [k for k in range(prob.d) if q[k] > 1e-9 * q_scale]
    act_d = [k for k in range(prob.d) if d[k] > 1e-9 * d_scale]
    if not act_q or not act_d or not set(act_d) <= set(act_q):
        return None
    if not (0.0 < eps < 1.0) or nu1 <= 0.0 or nu2 <= 0.0:
        return None
    nq, nd = len(act_q), len(act_d)

    def unpack(u):
        qq = np.zeros(prob.d)
        dd = np.zeros(prob.d)
        qq[act_q] = u[:nq]
        dd[act_d] = u[nq:nq + nd]
        return qq, dd, u[nq + nd], u[nq + nd + 1], u[nq + nd + 2]

    harvest0 = eps * prob.eta * float(np.dot(prob.alpha, q))
    scales = np.concatenate([
        np.full(nd, max(nu2, 1e-300)),
        np.full(nq, max(nu1, 1e-300)),
        [prob.p_source, max(harvest0, 1e-300), max(nu2 * harvest0, 1e-300)],
    ])

    def residuals(u):
        qq, dd, e, n1, n2 = unpack(u)
        if not (0.0 < e < 1.0):
            return None
        r_d = d_stationarity_residuals(qq, dd, e, n2, prob)[act_d]
        r_q = q_stationarity_residuals(qq, dd, e, n1, n2, prob)[act_q]
        r_p = power_residual(qq, prob)
        r_g = harvest_residual(qq, dd, e, prob)
        r_e = eps_stationarity_residual(qq, dd, e, n2, prob)
        return np.concatenate([r_d, r_q, [r_p, r_g, r_e]]) / scales

    u = np.concatenate([q[act_q], d[act_d], [eps, nu1, nu2]])
    f = residuals(u)
    if f is None:
        return None
    for _ in range(opts.kkt_max_newton):
        if np.max(np.abs(f)) < 1e-14:
            break
        jac = np.empty((len(u), len(u)))
        for j in range(len(u)):
            h = 1e-7 * max(abs(u[j]), 1e-12)
            up = u.copy()
            um = u.copy()
            up[j] += h
            um[j] -= h
            fp, fm = residuals(up), residuals(um)
            if fp is None or fm is None:
                return None
            jac[:, j] = (fp - fm) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, f, rcond=None)
        norm0 = float(np.linalg.norm(f))
        scale = 1.0
        improved = False
        for _ in range(40):
            u_try = u - scale * step
            if np.all(u_try[:nq + nd] > 0.0) and 0.0 < u_try[nq + nd] < 1.0 \
                    and u_try[nq + nd + 1] > 0.0 and u_try[nq + nd + 2] > 0.0:
                f_try = residuals(u_try)
                if f_try is not None and np.linalg.norm(f_try) < norm0:
                    u, f = u_try, f_try
                    improved = True
                    break
            scale *= 0.5
        if not improved:
            break

    qq, dd, e, n1, n2 = unpack(u)
    stat = max(
        float(np.max(np.abs(d_stationarity_residuals(qq, dd, e, n2, prob)))),
        float(np.max(np.abs(q_stationarity_residuals(qq, dd, e, n1, n2, prob)))),
    )
    if stat > opts.kkt_stat_tol:
        return None
    if abs(power_residual(qq, prob)) > 1e-7 * prob.p_source:
        return None
    harvest_scale = e * prob.eta * float(np.dot(prob.alpha, qq))
    if abs(harvest_residual(qq, dd, e, prob)) > 1e-7 * max(harvest_scale, 1e-300):
        return None
    # inactive modes must stay dual-feasible
    for k in range(prob.d):
        if k not in act_q and 2.0 * (n1 - n2 * e * prob.eta * prob.alpha[k]) < -1e-12:
            return None
    return qq, dd, e, n1, n2


def _qstat_rel(q, d, eps, nu1, nu2, prob) -> float:
    """Source-side stationarity residual normalized by the power dual."""
    res = q_stationarity_residuals(q, d, eps, nu1, nu2, prob)
    return float(np.max(np.abs(res))) / max(nu1, 1e-300)


def _face_ascent(q0, prob: JointProblem, opts: JointOptions, eps_warm: float):
    """Derivative-free ascent of the reduced objective q -> capacity of the
    re-optimized relay side, over the face {q >= 0, sum(q) = P}.

    Escape hatch for alternation stalls: when the power and harvested-energy
    constraints pin q between the two subproblems (unavoidable at D = 2,
    where the pinned face is a single point), neither subproblem can move q
    even though the reduced objective still climbs inside the face.

    Returns ``(q, (d, eps, mu))`` for the best point found, or
    ``(q0, None)`` when no uphill step exists.
    """
    p_budget = prob.p_source

    def evaluate(q):
        res = subproblem_a(q, prob, opts, eps_init=eps_warm, polish_width=1e-12)
        return scalar_rate_joint(q, res.d, res.eps, prob), (res.d, res.eps, res.mu)

    q = np.array(q0, dtype=float)
    cap, payload = evaluate(q)
    cap0 = cap
    h = 1e-6 * p_budget
    for _ in range(opts.face_ascent_iters):
        grad = np.zeros(prob.d)
        for k in range(prob.d):
            tangent = -np.full(prob.d, 1.0 / prob.d)
            tangent[k] += 1.0
            probe = q + h * tangent
            if np.any(probe < 0.0):
                continue
            grad[k] = (evaluate(probe)[0] - cap) / h
        direction = grad - grad.mean()
        # keep depleted coordinates from being pushed negative
        for _ in range(prob.d):
            blocked = (q <= 0.0) & (direction < 0.0)
            if not blocked.any():
                break
            direction[blocked] = 0.0
            free = ~blocked
            if free.any():
                direction[free] -= direction[free].mean()
        biggest = float(np.max(np.abs(direction)))
        if biggest <= 1e-14:
            break
        step = 0.25 * p_budget / biggest
        neg = direction < 0.0
        if neg.any():
            step = min(step, float(np.min(q[neg] / -direction[neg])))
        improved = False
        for _ in range(12):
            cand = np.clip(q + step * direction, 0.0, None)
            total = float(cand.sum())
            if total > 0.0:
                cand *= p_budget / total
                cap_c, payload_c = evaluate(cand)
                if cap_c > cap + 1e-12:
                    q, cap, payload = cand, cap_c, payload_c
                    improved = True
                    break
            step *= 0.5
        if not improved:
            break
    if cap <= cap0:
        return np.array(q0, dtype=float), None
    return q, payload


def solve_joint(prob: JointProblem, opts: JointOptions | None = None) -> JointSolution:
    """Alternate subproblem A and the dual decomposition until the capacity
    gain per round falls below ``opts.cap_tol``.

    Starts from uniform source powers q = (P/D)1.  The capacity sequence is
    monotone (a budget-preserving refresh of d guards the rare case where
    the eps fixed point would regress).  The returned (q, d, eps) are
    mutually consistent: d and eps are re-optimized for the final q, so the
    harvested-energy constraint is tight by construction and the power
    budget carries the dual-search residual only.
    """
    opts = opts or JointOptions()
    if prob.eta <= 0.0 or prob.p_source <= 0.0 or sum(prob.alpha) <= 0.0:
        return _zero_solution(prob)
    if all(a * b == 0.0 for a, b in zip(prob.alpha, prob.beta)):
        return _zero_solution(prob)

    p_budget = prob.p_source
    q = np.full(prob.d, p_budget / prob.d)
    eps_warm = opts.eps_init
    prev_pt = None  # (d, eps) of the previous accepted point at the current q
    history: list[float] = []
    feas: list[tuple] = []
    cap_last = None
    converged = False
    n_outer = 0

    def record_feasibility(q_now, d_now, eps_now):
        feas.append((float(np.sum(q_now)) - p_budget,
                     harvest_residual(q_now, d_now, eps_now, prob),
                     eps_now, float(np.min(q_now)), float(np.min(d_now))))

    def improve_d(q_now, prev, polish_width=1e-10):
        """Subproblem A with a monotone fallback against the previous point."""
        res = subproblem_a(q_now, prob, opts, eps_init=eps_warm,
                           polish_width=polish_width)
        d_new, eps_new, mu_new = res.d, res.eps, res.mu
        if prev is not None:
            cap_prev = scalar_rate_joint(q_now, prev[0], prev[1], prob)
            cap_new = scalar_rate_joint(q_now, d_new, eps_new, prob)
            if cap_new < cap_prev - 1e-12 * (1.0 + abs(cap_prev)):
                eps_new = prev[1]
                budget = eps_new * prob.eta * float(np.dot(prob.alpha, q_now))
                d_new, mu_new = _waterfill_d(budget, eps_new, q_now, prob)
        return d_new, eps_new, mu_new

    for t in range(opts.max_outer):
        n_outer = t + 1
        d, eps, mu = improve_d(q, prev_pt)
        if float(d.sum()) <= 0.0 or not 0.0 < eps < 1.0:
            break  # nothing to forward; q cannot be re-optimized
        cap_a = scalar_rate_joint(q, d, eps, prob)
        history.append(cap_a)
        record_feasibility(q, d, eps)
        eps_warm = eps
        q_new, nu1, nu2 = dual_decomposition_q(d, eps, prob, opts)
        cap_b = scalar_rate_joint(q_new, d, eps, prob)
        if cap_b < cap_a:  # numerically saturated; keep the better point
            q_new, cap_b = q, cap_a
            history.append(cap_b)
            record_feasibility(q_new, d, eps)
            prev_pt = (d, eps)
            q = q_new
            converged = True
            break
        history.append(cap_b)
        record_feasibility(q_new, d, eps)
        prev_pt = (d, eps)
        q = q_new
        if cap_last is not None and abs(cap_b - cap_last) <= opts.cap_tol:
            converged = True
            break
        cap_last = cap_b

    # make (d, eps, mu) consistent with the final q and derive the duals
    d, eps, mu = improve_d(q, prev_pt, polish_width=1e-14)
    nu2 = 1.0 / mu if math.isfinite(mu) and mu > 0 else 0.0
    nu1 = nu2 * prob.eta * float(np.dot(prob.alpha, q)) / p_budget
    polished = False
    if opts.kkt_polish and float(d.sum()) > 0.0 and 0.0 < eps < 1.0:

        def try_newton(q_c, d_c, eps_c, n1_c, n2_c):
            cap_c = scalar_rate_joint(q_c, d_c, eps_c, prob)
            ref = _newton_polish(q_c, d_c, eps_c, n1_c, n2_c, prob, opts)
            if ref is None:
                return None
            cap_r = scalar_rate_joint(ref[0], ref[1], ref[2], prob)
            if cap_r < cap_c - 1e-12 * (1.0 + abs(cap_c)):
                return None  # refuse any capacity regression
            return ref

        refined = try_newton(q, d, eps, nu1, nu2)
        if refined is None and _qstat_rel(q, d, eps, nu1, nu2, prob) > opts.ascent_trigger:
            # Alternation stall: with both coupling constraints tight the
            # dual decomposition cannot move q off its previous value (the
            # pinned face is a point at D = 2), so climb the reduced
            # objective directly and refine again from there.
            q_up, payload = _face_ascent(q, prob, opts, eps_warm=eps)
            if payload is not None:
                q = q_up
                d, eps, mu = payload
                nu2 = 1.0 / mu if math.isfinite(mu) and mu > 0 else 0.0
                nu1 = nu2 * prob.eta * float(np.dot(prob.alpha, q)) / p_budget
                refined = try_newton(q, d, eps, nu1, nu2)
        if refined is not None:
            q, d, eps, nu1, nu2 = refined
            polished = True
    capacity = scalar_rate_joint(q, d, eps, prob)
    history.append(capacity)
    record_feasibility(q, d, eps)
    return JointSolution(q=np.asarray(q, dtype=float), d=np.asarray(d, dtype=float),
                         eps=eps, nu1=nu1, nu2=nu2, capacity=capacity,
                         converged=converged, n_outer=n_outer,
                         capacity_history=tuple(history),
                         feasibility_history=tuple(feas), polished=polished)


def build_joint_matrices(sol: JointSolution, eig: EigenSystem, prob: JointProblem):
    """Source covariance Q and relay precoder F realizing the scalar solution.

    Q = V1 diag(q) V1^H on the d strongest first-hop modes; F = V2 diag(sqrt(f)) U1^H
    with f_k = d_k / ((1-eps)*alpha_k*q_k + sigma1^2).
    """
    dm = len(sol.q)
    if eig.d != dm:
        raise ValueError("eigensystem and solution have different mode counts")
    f_gain = np.asarray(sol.d) / ((1.0 - sol.eps) * np.asarray(eig.alpha)
                                  * np.asarray(sol.q) + prob.sigma1_sq)
    q_cov = (eig.v1[:, :dm] * np.asarray(sol.q)) @ eig.v1[:, :dm].conj().T
    f_mat = (eig.v2[:, :dm] * np.sqrt(f_gain)) @ eig.u1[:, :dm].conj().T
    q_cov = 0.5 * (q_cov + q_cov.conj().T)
    return q_cov, f_mat


def matrix_rate_joint(ch: ChannelPair, q_cov: np.ndarray, f_mat: np.ndarray,
                      eps: float, params: SystemParams) -> float:
    """Rate of the full matrix channel for an arbitrary source covariance."""
    return matrix_capacity(ch, q_cov, f_mat, eps, params.sigma1_sq, params.sigma2_sq)
