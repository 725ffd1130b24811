"""Uniform-source-precoding solver.

With the source covariance pinned to (P/D)I the problem reduces to D
scalar relay allocations x_k and the power-splitting ratio eps, coupled by
one harvested-energy budget.  The solver alternates a dual water-filling
step in x (closed form per mode, dual found by bracketed bisection) with a
closed-form eps update until the pair is a fixed point, then reconstructs
the relay precoding matrix from the eigenmode factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import matrix_capacity
from ._rootfind import (best_endpoint, bisect_bracket, expand_until_negative,
                        solve_eps_fixed_point)
from .channel import ChannelPair, EigenSystem, SystemParams, snr_pair
from .errors import DegenerateBudgetError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class FixedQProblem:
    """Eigenmode gains and SNR factors for the uniform-precoding case."""

    alpha: tuple
    beta: tuple
    rho1: float
    rho2: float
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
        if not (self.rho1 > 0 and self.rho2 > 0):
            raise ValueError("rho1 and rho2 must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    @property
    def d(self) -> int:
        return len(self.alpha)

    @classmethod
    def from_eigensystem(cls, eig: EigenSystem, params: SystemParams) -> "FixedQProblem":
        snr = snr_pair(params)
        return cls(alpha=eig.alpha, beta=eig.beta, rho1=snr.rho1, rho2=snr.rho2,
                   eta=params.eta)


@dataclass(frozen=True)
class FixedQOptions:
    """Knobs for the eps search; defaults match the CLI experiment setup."""

    mode: str = "fixed_point"  # "fixed_point" or "sweep"
    eps_tol: float = 1e-3
    sweep_step: float = 1e-3
    eps_init: float = 1e-3
    damping: float = 0.5
    max_iter: int = 1000
    dual_tol: float | None = None  # None: bisect down to bracket width 1e-15
    polish: bool = True


@dataclass(frozen=True, eq=False)
class FixedQSolution:
    x: np.ndarray
    eps: float
    mu: float
    capacity: float
    converged: bool
    n_iter: int


def scalar_rate_fixed_q(x, eps: float, prob: FixedQProblem) -> float:
    """Rate in bits per channel use for allocation x at split ratio eps.

    Per mode the end-to-end SNR is a*bx/(1+a+bx) with a = (1-eps)*rho1*alpha_k
    and bx = beta_k*x_k; the one-half factor accounts for the two hops.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.d,):
        raise ValueError(f"x must have length {prob.d}, got shape {x.shape}")
    if np.any(x < 0):
        raise ValueError("allocations must be nonnegative")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    total = 0.0
    c1 = (1.0 - eps) * prob.rho1
    for k in range(prob.d):
        a = c1 * prob.alpha[k]
        bx = prob.beta[k] * float(x[k])
        total += math.log2(1.0 + a * bx / (1.0 + a + bx))
    return 0.5 * total


def _mode_allocation(a: float, b: float, mu: float) -> float:
    """Positive-part water-filling level for one mode.

    Solves (1+b*x)(1+a+b*x) = a*b*mu/ln2... i.e. the stationarity condition,
    written so that the square-root difference never cancels catastrophically.
    """
    if a <= 0.0 or b <= 0.0:
        return 0.0
    t = (2.0 / LN2) * a * b * mu
    num = t / (math.sqrt(a * a + t) + a) - 2.0
    if num <= 0.0:
        return 0.0
    return num / (2.0 * b)


def optimal_x(mu: float, eps: float, prob: FixedQProblem) -> np.ndarray:
    """Water-filling allocation for dual value mu at fixed eps.

    Modes whose activation threshold exceeds mu get zero; a mode with
    beta_k = 0 carries no second-hop gain and also gets zero.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    c1 = (1.0 - eps) * prob.rho1
    return np.array([_mode_allocation(c1 * prob.alpha[k], prob.beta[k], mu)
                     for k in range(prob.d)])


def _dual_gap(mu: float, eps: float, prob: FixedQProblem) -> float:
    """Stationarity gap in eps as a function of the water-filling dual.

    Positive below the root, negative above; strictly decreasing once any
    mode is active.
    """
    c1 = (1.0 - eps) * prob.rho1
    s = 0.0
    for k in range(prob.d):
        a = c1 * prob.alpha[k]
        b = prob.beta[k]
        x = _mode_allocation(a, b, mu)
        if x > 0.0:
            bx = b * x
            s += prob.alpha[k] * bx / ((1.0 + a) * (1.0 + a + bx))
    harvest = prob.eta * prob.rho2 * sum(prob.alpha)
    return harvest / mu - (prob.rho1 / (2.0 * LN2)) * s


def activation_thresholds(eps: float, prob: FixedQProblem) -> np.ndarray:
    """Per-mode dual value at which x_k turns positive (inf for dead modes)."""
    c1 = (1.0 - eps) * prob.rho1
    out = np.full(prob.d, np.inf)
    for k in range(prob.d):
        a = c1 * prob.alpha[k]
        b = prob.beta[k]
        if a > 0.0 and b > 0.0:
            out[k] = 2.0 * LN2 * (1.0 + a) / (a * b)
    return out


def dual_root_fixed_q(eps: float, prob: FixedQProblem, tol: float | None = None) -> float:
    """Dual value mu* at which the eps-stationarity gap vanishes.

    The bracket opens at the smallest activation threshold (where the gap
    is strictly positive) and the upper end is found by geometric
    expansion; bisection then shrinks it until |gap| <= tol or the bracket
    width is at machine resolution.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    if prob.eta <= 0.0:
        raise DegenerateBudgetError("eta = 0: harvested budget is zero")
    if eps == 0.0:
        raise DegenerateBudgetError("eps = 0: harvested budget is zero")
    thresholds = activation_thresholds(eps, prob)
    lo = float(np.min(thresholds))
    if not np.isfinite(lo):
        raise DegenerateBudgetError("no eigenmode carries gain on both hops")

    def gap(mu):
        return _dual_gap(mu, eps, prob)

    f_lo = gap(lo)
    hi, f_hi = expand_until_negative(gap, lo)
    f_tol = 0.0 if tol is None else tol
    lo, f_lo, hi, f_hi = bisect_bracket(gap, lo, hi, f_lo, f_hi, f_tol=f_tol)
    mu, _ = best_endpoint(lo, f_lo, hi, f_hi)
    return mu


def eps_update_fixed_q(x, prob: FixedQProblem) -> float:
    """Split ratio that makes the harvested-energy budget exactly tight."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("allocations must be nonnegative")
    denom = prob.eta * prob.rho2 * sum(prob.alpha)
    if denom <= 0.0:
        raise DegenerateBudgetError("harvested budget is zero (eta or alpha vanish)")
    return min(max(float(x.sum()) / denom, 0.0), 1.0)


def energy_residual(x, eps: float, prob: FixedQProblem) -> float:
    """Slack of the harvested-energy budget: eta*eps*rho2*sum(alpha) - sum(x)."""
    x = np.asarray(x, dtype=float)
    return prob.eta * eps * prob.rho2 * sum(prob.alpha) - float(x.sum())


def x_stationarity_residuals(x, eps: float, mu: float, prob: FixedQProblem) -> np.ndarray:
    """Per-mode stationarity gap for active allocations (zeros elsewhere).

    For x_k > 0 the water-filling condition equates the marginal rate of
    mode k with 1/mu; the marginal is evaluated in product form to avoid
    cancellation between the two noise terms.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros(prob.d)
    c1 = (1.0 - eps) * prob.rho1
    for k in range(prob.d):
        if x[k] <= 0.0:
            continue
        a = c1 * prob.alpha[k]
        bx = prob.beta[k] * float(x[k])
        marginal = (prob.beta[k] * a) / (2.0 * LN2 * (1.0 + bx) * (1.0 + a + bx))
        out[k] = marginal - 1.0 / mu
    return out


def _degenerate_solution(prob: FixedQProblem) -> FixedQSolution:
    return FixedQSolution(x=np.zeros(prob.d), eps=0.0, mu=math.inf,
                          capacity=0.0, converged=True, n_iter=0)


def solve_fixed_q(prob: FixedQProblem, opts: FixedQOptions | None = None) -> FixedQSolution:
    """Optimize the relay allocation and split ratio for uniform precoding.

    Two search modes are available: a stepwise upward sweep (eps from
    0.001 in 0.001 increments) and a damped fixed-point iteration on the
    same update maps (default).  Both stop once the eps
    update is within ``eps_tol`` of its input and, with ``polish`` on,
    refine the fixed point by bisection so the reported pair (x, eps) makes
    the energy budget tight to machine precision.
    """
    opts = opts or FixedQOptions()
    if prob.eta <= 0.0 or sum(prob.alpha) <= 0.0:
        return _degenerate_solution(prob)
    if all(a * b == 0.0 for a, b in zip(prob.alpha, prob.beta)):
        return _degenerate_solution(prob)  # no mode carries end-to-end gain

    def eps_star(e):
        mu = dual_root_fixed_q(e, prob, tol=opts.dual_tol)
        x = optimal_x(mu, e, prob)
        denom = prob.eta * prob.rho2 * sum(prob.alpha)
        return float(x.sum()) / denom  # unclamped ratio for root finding

    eps_fin, converged, n_evals = solve_eps_fixed_point(
        eps_star, mode=opts.mode, eps_tol=opts.eps_tol,
        sweep_step=opts.sweep_step, eps_init=opts.eps_init,
        damping=opts.damping, max_iter=opts.max_iter, polish=opts.polish)

    mu = dual_root_fixed_q(eps_fin, prob, tol=opts.dual_tol)
    x = optimal_x(mu, eps_fin, prob)
    eps_rep = eps_update_fixed_q(x, prob)
    capacity = scalar_rate_fixed_q(x, eps_rep, prob)

    if not converged:
        # keep the best consistent pair seen on a coarse scan instead
        best = (capacity, eps_rep, x, mu)
        for e in np.linspace(0.005, 0.995, 199):
            mu_e = dual_root_fixed_q(float(e), prob, tol=opts.dual_tol)
            x_e = optimal_x(mu_e, float(e), prob)
            eps_e = eps_update_fixed_q(x_e, prob)
            denom = prob.eta * prob.rho2 * sum(prob.alpha)
            if float(x_e.sum()) / denom > 1.0:
                continue  # allocation needs more than the full harvest
            cap_e = scalar_rate_fixed_q(x_e, eps_e, prob)
            if cap_e > best[0]:
                best = (cap_e, eps_e, x_e, mu_e)
        capacity, eps_rep, x, mu = best

    return FixedQSolution(x=x, eps=eps_rep, mu=mu, capacity=capacity,
                          converged=converged, n_iter=n_evals)


def build_relay_precoder(sol: FixedQSolution, eig: EigenSystem,
                         params: SystemParams) -> np.ndarray:
    """Relay precoding matrix realizing the scalar allocation.

    F = (sigma2/sigma1) * V2 * diag(sqrt(x_k/(1+(1-eps)*rho1*alpha_k))) * U1^H,
    using the d strongest eigenmode vectors of each hop.
    """
    d = len(sol.x)
    if eig.d != d:
        raise ValueError("eigensystem and solution have different mode counts")
    rho1 = snr_pair(params).rho1
    gains = np.sqrt(np.asarray(sol.x) /
                    (1.0 + (1.0 - sol.eps) * rho1 * eig.alpha))
    scale = math.sqrt(params.sigma2_sq / params.sigma1_sq)
    return scale * (eig.v2[:, :d] * gains) @ eig.u1[:, :d].conj().T


def matrix_rate_fixed_q(ch: ChannelPair, f_mat: np.ndarray, eps: float,
                        params: SystemParams) -> float:
    """Rate of the full matrix channel under uniform source covariance Q = (P/D)I."""
    p_mode = params.p_source / params.d_streams
    q_cov = p_mode * np.eye(ch.h1.shape[1])
    return matrix_capacity(ch, q_cov, f_mat, eps, params.sigma1_sq, params.sigma2_sq)
