"""Brute-force grid maximizers used as ground truth at small D.

These deliberately share no code with the iterative solvers: the rate
expressions are re-evaluated locally in vectorized form and the feasible
sets are searched as inequalities, so constraint tightness at the optimum
is confirmed rather than assumed.  Ties resolve deterministically to the
smallest eps, then the lexicographically smallest allocation (guaranteed
by enumeration order plus strict-improvement tracking across rounds).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixed_q import FixedQProblem
from .joint import JointProblem


@dataclass(frozen=True)
class GridSpec:
    """Search resolution: eps grid points, per-axis allocation points, and
    the number of 4x box-shrink refinement passes."""

    eps_steps: int = 101
    simplex_steps: int = 61
    refine_rounds: int = 3

    def __post_init__(self):
        if min(self.eps_steps, self.simplex_steps, self.refine_rounds) < 2:
            raise ValueError("all GridSpec counts must be >= 2")


@dataclass(frozen=True, eq=False)
class OracleFixedQResult:
    x: np.ndarray
    eps: float
    capacity: float
    round_values: tuple


@dataclass(frozen=True, eq=False)
class OracleJointResult:
    q: np.ndarray
    d: np.ndarray
    eps: float
    capacity: float
    round_values: tuple


def _axis_mesh(axes):
    """Cartesian product of the per-axis grids, rows in lexicographic order."""
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def oracle_fixed_q(prob: FixedQProblem, grid: GridSpec | None = None) -> OracleFixedQResult:
    """Exhaustive search of the uniform-precoding problem (D <= 3).

    Grids eps over [0, 1] and, per eps, the allocation over the simplex
    {x >= 0, sum(x) <= eta*eps*rho2*sum(alpha)}; then refines a shrinking
    box around the incumbent.
    """
    grid = grid or GridSpec()
    dim = prob.d
    if dim > 3:
        raise ValueError(f"oracle_fixed_q supports D <= 3, got D = {dim}")
    alpha = np.asarray(prob.alpha)
    beta = np.asarray(prob.beta)
    budget_rate = prob.eta * prob.rho2 * float(alpha.sum())  # budget per unit eps

    def rate_rows(xs, eps):
        a = (1.0 - eps) * prob.rho1 * alpha
        bx = xs * beta
        snr = a * bx / (1.0 + a + bx)
        return 0.5 * np.sum(np.log2(1.0 + snr), axis=1)

    best = (-1.0, 0.0, np.zeros(dim))  # capacity, eps, x
    round_values = []
    w_eps, w_x = 1.0, None
    eps_lo, eps_hi = 0.0, 1.0
    x_center = None
    for rnd in range(grid.refine_rounds + 1):
        eps_grid = np.linspace(eps_lo, eps_hi, grid.eps_steps)
        for eps in eps_grid:
            eps = float(eps)
            budget = budget_rate * eps
            if x_center is None:
                axes = [np.linspace(0.0, budget, grid.simplex_steps)] * dim
            else:
                axes = [np.linspace(max(0.0, c - w_x / 2.0), c + w_x / 2.0,
                                    grid.simplex_steps) for c in x_center]
            xs = _axis_mesh(axes)
            xs = xs[xs.sum(axis=1) <= budget]
            if xs.size == 0:
                continue
            caps = rate_rows(xs, eps)
            i = int(np.argmax(caps))
            if caps[i] > best[0]:
                best = (float(caps[i]), eps, xs[i].copy())
        round_values.append(best[0])
        # shrink a refinement box around the incumbent
        w_eps /= 4.0
        w_x = (budget_rate * best[1] if w_x is None else w_x) / 4.0
        eps_lo = max(0.0, best[1] - w_eps / 2.0)
        eps_hi = min(1.0, best[1] + w_eps / 2.0)
        x_center = best[2]
    cap = max(best[0], 0.0)
    return OracleFixedQResult(x=best[2], eps=best[1], capacity=cap,
                              round_values=tuple(round_values))


def oracle_joint(prob: JointProblem, grid: GridSpec | None = None) -> OracleJointResult:
    """Exhaustive search of the joint design problem (D <= 2).

    Grids eps and the source simplex {q >= 0, sum(q) <= P}; for each (eps, q)
    the relay simplex {d >= 0, sum(d) <= eps*eta*sum(alpha*q)} is searched
    through budget fractions in the first pass and absolute boxes afterwards.
    The capacity product is maximized per mode without logs in the hot loop.
    """
    grid = grid or GridSpec()
    dim = prob.d
    if dim > 2:
        raise ValueError(f"oracle_joint supports D <= 2, got D = {dim}")
    alpha = np.asarray(prob.alpha)
    beta = np.asarray(prob.beta)
    p_budget = prob.p_source
    n = grid.simplex_steps

    # in-place accumulation buffers; the (I, J) tensors dominate the runtime
    def accumulate_mode(prod, buf, tmp, a_col, b_outer):
        """prod *= 1 + a*b/(1+a+b) elementwise, reusing buf/tmp storage."""
        np.add(b_outer, 1.0, out=tmp)
        np.add(tmp, a_col, out=tmp)           # 1 + a + b
        np.divide(b_outer, tmp, out=buf)      # b / (1+a+b)
        np.multiply(buf, a_col, out=buf)      # a*b / (1+a+b)
        buf += 1.0
        prod *= buf

    best = (-1.0, 0.0, np.zeros(dim), np.zeros(dim))  # capacity, eps, q, d
    round_values = []
    # first pass: d expressed as fractions of the per-(eps, q) budget
    unit_axes = [np.linspace(0.0, 1.0, n)] * dim
    fr = _axis_mesh(unit_axes)
    fr = fr[fr.sum(axis=1) <= 1.0]
    q_axes = [np.linspace(0.0, p_budget, n)] * dim
    qs = _axis_mesh(q_axes)
    qs = qs[qs.sum(axis=1) <= p_budget]
    aq = qs @ alpha
    shape = (qs.shape[0], fr.shape[0])
    # single precision for the large tensors: the 4x grid refinement leaves
    # far more slack than the ~1e-6 bit rounding this costs
    prod = np.empty(shape, dtype=np.float32)
    buf = np.empty(shape, dtype=np.float32)
    tmp = np.empty(shape, dtype=np.float32)
    b_outer = np.empty(shape, dtype=np.float32)
    fr32 = fr.astype(np.float32)
    for eps in np.linspace(0.0, 1.0, grid.eps_steps):
        eps = float(eps)
        budgets = eps * prob.eta * aq  # (I,)
        prod.fill(1.0)
        for k in range(dim):
            a_col = (((1.0 - eps) * alpha[k] / prob.sigma1_sq)
                     * qs[:, k:k + 1]).astype(np.float32)
            np.multiply(budgets[:, None].astype(np.float32), fr32[None, :, k],
                        out=b_outer)
            b_outer *= np.float32(beta[k] / prob.sigma2_sq)
            accumulate_mode(prod, buf, tmp, a_col, b_outer)
        flat = int(np.argmax(prod))
        i, j = divmod(flat, fr.shape[0])
        cap = 0.5 * float(np.log2(prod[i, j]))
        if cap > best[0]:
            best = (cap, eps, qs[i].copy(), budgets[i] * fr[j])
    round_values.append(best[0])

    w_eps = 1.0 / 4.0
    w_q = p_budget / 4.0
    w_d = max(float(prob.eta * best[1] * float(alpha @ best[2])), 1e-12) / 4.0
    for rnd in range(grid.refine_rounds):
        eps_lo = max(0.0, best[1] - w_eps / 2.0)
        eps_hi = min(1.0, best[1] + w_eps / 2.0)
        q_axes = [np.linspace(max(0.0, c - w_q / 2.0), c + w_q / 2.0, n)
                  for c in best[2]]
        d_axes = [np.linspace(max(0.0, c - w_d / 2.0), c + w_d / 2.0, n)
                  for c in best[3]]
        qs = _axis_mesh(q_axes)
        qs = qs[qs.sum(axis=1) <= p_budget]
        ds = _axis_mesh(d_axes)
        d_sums = ds.sum(axis=1)
        aq = qs @ alpha
        if qs.size == 0 or ds.size == 0:
            round_values.append(best[0])
            w_eps /= 4.0
            w_q /= 4.0
            w_d /= 4.0
            continue
        shape = (qs.shape[0], ds.shape[0])
        prod = np.empty(shape, dtype=np.float32)
        buf = np.empty(shape, dtype=np.float32)
        tmp = np.empty(shape, dtype=np.float32)
        for eps in np.linspace(eps_lo, eps_hi, grid.eps_steps):
            eps = float(eps)
            budgets = eps * prob.eta * aq
            mask = d_sums[None, :] <= budgets[:, None]
            if not mask.any():
                continue
            prod.fill(1.0)
            for k in range(dim):
                a_col = (((1.0 - eps) * alpha[k] / prob.sigma1_sq)
                         * qs[:, k:k + 1]).astype(np.float32)
                b_row = ((beta[k] / prob.sigma2_sq) * ds[:, k]).astype(np.float32)
                np.add(b_row[None, :], np.float32(1.0), out=tmp)
                tmp += a_col                      # 1 + a + b
                np.divide(b_row[None, :], tmp, out=buf)
                np.multiply(buf, a_col, out=buf)  # a*b / (1+a+b)
                buf += np.float32(1.0)
                prod *= buf
            prod *= mask
            flat = int(np.argmax(prod))
            i, j = divmod(flat, ds.shape[0])
            if prod[i, j] <= 0.0:
                continue
            cap = 0.5 * float(np.log2(prod[i, j]))
            if cap > best[0]:
                best = (cap, eps, qs[i].copy(), ds[j].copy())
        round_values.append(best[0])
        w_eps /= 4.0
        w_q /= 4.0
        w_d /= 4.0
    cap = max(best[0], 0.0)
    return OracleJointResult(q=best[2], d=best[3], eps=best[1], capacity=cap,
                             round_values=tuple(round_values))
