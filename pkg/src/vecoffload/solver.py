"""Log-barrier interior-point solver for separable convex programs.

The problem class is

    minimize    sum_j c_j (2**(a_j x_{i_j}) - 1)
              + sum_j k_j (s_j - x_{i_j})**3
              + q @ x + constant
    subject to  A x = b,  G x <= h,  lb <= x <= ub

with nonnegative coefficients. The objective Hessian is diagonal, so every
Newton system is either a small dense reduced system (null-space method) or a
sparse KKT system factored with SuperLU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

LN2 = math.log(2.0)

# equality systems with more rows than this go through sparse KKT solves
NULLSPACE_MAX_ROWS = 1000
# dense null-space bases are only formed for programs this small
NULLSPACE_MAX_VARS = 1500


class SolverError(Exception):
    """Base class for solver failures."""


class InfeasibleError(SolverError):
    """The program (or a baseline plan) admits no feasible point."""

    def __init__(self, message: str, families: Sequence[str] = ()):
        super().__init__(message)
        self.families = list(families)


class ConvergenceError(SolverError):
    """Iteration budget exhausted before the tolerance was met."""


def _as_csr(mat, ncols: int) -> sp.csr_matrix:
    if mat is None:
        return sp.csr_matrix((0, ncols))
    return sp.csr_matrix(mat, dtype=float)


@dataclass
class ConvexProgram:
    """Canonical separable convex program.

    Objective terms are stored as parallel arrays; a variable may carry any
    number of terms. Every constraint row and every finite bound carries a
    family label so infeasibility certificates can be reported by name.
    """

    n: int
    exp_index: np.ndarray
    exp_coef: np.ndarray
    exp_rate: np.ndarray
    cubic_index: np.ndarray
    cubic_coef: np.ndarray
    cubic_shift: np.ndarray
    linear: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    eq_labels: list
    ineq_labels: list
    lb_labels: list
    ub_labels: list
    constant: float = 0.0
    layout: Any = None

    @classmethod
    def create(cls, n, *, exp_terms=None, cubic_terms=None, linear=None,
               A_eq=None, b_eq=None, G=None, h=None, lb=None, ub=None,
               eq_labels=None, ineq_labels=None, lb_labels=None,
               ub_labels=None, constant=0.0, layout=None) -> "ConvexProgram":
        """Build a program from loosely typed pieces and validate it.

        ``exp_terms`` and ``cubic_terms`` are ``(index, coef, rate)`` and
        ``(index, coef, shift)`` triples of array-likes.
        """
        n = int(n)
        ei, ec, er = exp_terms if exp_terms is not None else ([], [], [])
        ci, cc, cs = cubic_terms if cubic_terms is not None else ([], [], [])
        A = _as_csr(A_eq, n)
        Gm = _as_csr(G, n)
        b = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        hh = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
        lbv = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).copy()
        ubv = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).copy()
        prog = cls(
            n=n,
            exp_index=np.asarray(ei, dtype=np.int64).ravel(),
            exp_coef=np.asarray(ec, dtype=float).ravel(),
            exp_rate=np.asarray(er, dtype=float).ravel(),
            cubic_index=np.asarray(ci, dtype=np.int64).ravel(),
            cubic_coef=np.asarray(cc, dtype=float).ravel(),
            cubic_shift=np.asarray(cs, dtype=float).ravel(),
            linear=np.zeros(n) if linear is None else np.asarray(linear, dtype=float).copy(),
            A_eq=A, b_eq=b, G=Gm, h=hh, lb=lbv, ub=ubv,
            eq_labels=list(eq_labels) if eq_labels is not None else ["equality"] * A.shape[0],
            ineq_labels=list(ineq_labels) if ineq_labels is not None else ["inequality"] * Gm.shape[0],
            lb_labels=list(lb_labels) if lb_labels is not None else ["lower_bound"] * n,
            ub_labels=list(ub_labels) if ub_labels is not None else ["upper_bound"] * n,
            constant=float(constant),
            layout=layout,
        )
        prog.check()
        return prog

    @property
    def num_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def num_ineq(self) -> int:
        return self.G.shape[0]

    def check(self) -> None:
        """Raise ``ValueError`` on dimension mismatches or a lost convexity certificate."""
        n = self.n
        if self.linear.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("linear/lb/ub must have length n")
        if self.A_eq.shape[1] != n or self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError(f"equality system shape {self.A_eq.shape} does not match n={n}, rhs={self.b_eq.size}")
        if self.G.shape[1] != n or self.G.shape[0] != self.h.size:
            raise ValueError(f"inequality system shape {self.G.shape} does not match n={n}, rhs={self.h.size}")
        if not (self.exp_index.size == self.exp_coef.size == self.exp_rate.size):
            raise ValueError("exp term arrays differ in length")
        if not (self.cubic_index.size == self.cubic_coef.size == self.cubic_shift.size):
            raise ValueError("cubic term arrays differ in length")
        for idx in (self.exp_index, self.cubic_index):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError("objective term refers to a variable outside [0, n)")
        if np.any(self.exp_coef < 0) or np.any(self.cubic_coef < 0):
            raise ValueError("objective coefficients must be nonnegative")
        if self.cubic_index.size and np.any(self.ub[self.cubic_index] > self.cubic_shift):
            raise ValueError("cubic terms need an upper bound at or below their shift")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        if len(self.eq_labels) != self.num_eq or len(self.ineq_labels) != self.num_ineq:
            raise ValueError("constraint label count mismatch")
        if len(self.lb_labels) != n or len(self.ub_labels) != n:
            raise ValueError("bound label count mismatch")

    # objective ---------------------------------------------------------

    def objective(self, x: np.ndarray) -> float:
        val = self.constant + float(self.linear @ x)
        if self.exp_index.size:
            val += float(np.sum(self.exp_coef * np.expm1(LN2 * self.exp_rate * x[self.exp_index])))
        if self.cubic_index.size:
            val += float(np.sum(self.cubic_coef * (self.cubic_shift - x[self.cubic_index]) ** 3))
        return val

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = self.linear.copy()
        if self.exp_index.size:
            r = self.exp_rate * LN2
            np.add.at(g, self.exp_index, self.exp_coef * r * np.exp(r * x[self.exp_index]))
        if self.cubic_index.size:
            a = self.cubic_shift - x[self.cubic_index]
            np.add.at(g, self.cubic_index, -3.0 * self.cubic_coef * a * a)
        return g

    def hessian_diag(self, x: np.ndarray) -> np.ndarray:
        d = np.zeros(self.n)
        if self.exp_index.size:
            r = self.exp_rate * LN2
            np.add.at(d, self.exp_index, self.exp_coef * r * r * np.exp(r * x[self.exp_index]))
        if self.cubic_index.size:
            a = self.cubic_shift - x[self.cubic_index]
            np.add.at(d, self.cubic_index, 6.0 * self.cubic_coef * a)
        return d

    def objective_change(self, x: np.ndarray, step: np.ndarray) -> float:
        """``f(x + step) - f(x)`` evaluated without catastrophic cancellation."""
        val = float(self.linear @ step)
        if self.exp_index.size:
            r = self.exp_rate * LN2
            xi = x[self.exp_index]
            val += float(np.sum(self.exp_coef * np.exp(r * xi) * np.expm1(r * step[self.exp_index])))
        if self.cubic_index.size:
            a = self.cubic_shift - x[self.cubic_index]
            s = step[self.cubic_index]
            val += float(np.sum(self.cubic_coef * (-3.0 * a * a * s + 3.0 * a * s * s - s ** 3)))
        return val

    def slacks(self, x: np.ndarray):
        """Inequality, lower-bound and upper-bound slacks (finite bounds only)."""
        fl = np.isfinite(self.lb)
        fu = np.isfinite(self.ub)
        return (self.h - self.G @ x, (x - self.lb)[fl], (self.ub - x)[fu])


@dataclass
class KKTResiduals:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    complementarity: float
    duality_gap: float

    def max(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_ineq,
                   self.complementarity, self.duality_gap)

    def as_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "primal_eq": self.primal_eq,
            "primal_ineq": self.primal_ineq,
            "complementarity": self.complementarity,
            "duality_gap": self.duality_gap,
        }


@dataclass
class Solution:
    x: np.ndarray
    nu: np.ndarray
    lam_ineq: np.ndarray
    lam_lb: np.ndarray
    lam_ub: np.ndarray
    objective: float
    status: str
    iterations: int
    outer_iterations: int = 0
    residuals: Optional[KKTResiduals] = None
    history: list = field(default_factory=list)
    t: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class FeasibilityResult:
    feasible: bool
    x: Optional[np.ndarray]
    max_violation: float
    families: list = field(default_factory=list)
    violated_eq: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    violated_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    violated_lb: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    violated_ub: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    iterations: int = 0


@dataclass
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 1000
    t0: float = 1.0
    mu: float = 10.0
    inner_tolerance: float = 1e-10
    max_inner: int = 80
    method: str = "auto"  # "auto" | "kkt" | "nullspace"
    callback: Optional[Callable[[dict], None]] = None


def kkt_residuals(program: ConvexProgram, solution: Solution) -> KKTResiduals:
    """Recompute KKT residuals of ``solution`` from the program data alone.

    All residuals are relative: stationarity to ``1 + |grad f|_inf``, primal
    residuals to ``1 + |rhs|_inf``, complementarity and duality gap to
    ``1 + |f|``.
    """
    x = solution.x
    p = program
    f = p.objective(x)
    grad = p.gradient(x)
    fl = np.isfinite(p.lb)
    fu = np.isfinite(p.ub)
    r = grad + p.A_eq.T @ solution.nu + p.G.T @ solution.lam_ineq
    r = r - np.where(fl, solution.lam_lb, 0.0) + np.where(fu, solution.lam_ub, 0.0)
    stat = _inf_norm(r) / (1.0 + _inf_norm(grad))

    eq = _inf_norm(p.A_eq @ x - p.b_eq) / (1.0 + _inf_norm(p.b_eq)) if p.num_eq else 0.0

    s_g, s_l, s_u = p.slacks(x)
    viol = 0.0
    for s in (s_g, s_l, s_u):
        if s.size:
            viol = max(viol, float(np.max(-s)))
    scale = 1.0 + max(_inf_norm(p.h), _inf_norm(p.lb[fl]), _inf_norm(p.ub[fu]))
    ineq = max(viol, 0.0) / scale

    products = np.concatenate([
        solution.lam_ineq * s_g,
        solution.lam_lb[fl] * s_l,
        solution.lam_ub[fu] * s_u,
    ])
    duals = np.concatenate([solution.lam_ineq, solution.lam_lb[fl], solution.lam_ub[fu]])
    neg_dual = max(0.0, float(np.max(-duals))) if duals.size else 0.0
    comp = (_inf_norm(products) + neg_dual) / (1.0 + abs(f))
    gap = abs(float(np.sum(products))) / (1.0 + abs(f))
    return KKTResiduals(stat, eq, ineq, comp, gap)


def _inf_norm(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


class _Barrier:
    """Barrier machinery shared by phase 1 and phase 2."""

    def __init__(self, program: ConvexProgram, method: str, border: bool = False):
        self.p = program
        self.border = border
        self.fl = np.flatnonzero(np.isfinite(program.lb))
        self.fu = np.flatnonzero(np.isfinite(program.ub))
        self.m = program.num_ineq + self.fl.size + self.fu.size
        p = program.num_eq
        if method == "auto":
            small = p <= NULLSPACE_MAX_ROWS and program.n <= NULLSPACE_MAX_VARS
            method = "nullspace" if small else "kkt"
        self.method = method
        self.Z = None
        self.A_dense = None
        if method == "nullspace":
            self.border = False
            self.A_dense = program.A_eq.toarray()
            if p:
                self.Z = sla.null_space(self.A_dense)
                self.A_pinv = np.linalg.pinv(self.A_dense)
            else:
                self.Z = np.eye(program.n)

    def domain_ok(self, x) -> bool:
        s_g, s_l, s_u = self.p.slacks(x)
        if any(s.size and np.min(s) <= 0.0 for s in (s_g, s_l, s_u)):
            return False
        if self.p.cubic_index.size and np.any(self.p.cubic_shift - x[self.p.cubic_index] < 0):
            return False
        return True

    def gradient(self, x, t):
        p = self.p
        s_g, s_l, s_u = p.slacks(x)
        g = t * p.gradient(x)
        if s_g.size:
            g += p.G.T @ (1.0 / s_g)
        g[self.fl] -= 1.0 / s_l
        g[self.fu] += 1.0 / s_u
        return g, (s_g, s_l, s_u)

    def hessian(self, x, t, slacks):
        p = self.p
        s_g, s_l, s_u = slacks
        d = t * p.hessian_diag(x)
        d[self.fl] += 1.0 / s_l ** 2
        d[self.fu] += 1.0 / s_u ** 2
        H = sp.diags(d, format="csr")
        if s_g.size:
            H = H + (p.G.T @ sp.diags(1.0 / s_g ** 2) @ p.G)
        return sp.csr_matrix(H)

    def newton(self, x, t):
        """Newton step and equality multipliers (scaled by ``t``) at ``x``."""
        g, slacks = self.gradient(x, t)
        H = self.hessian(x, t, slacks)
        p = self.p
        nE = p.num_eq
        # steps also remove any drift off A x = b
        r_eq = p.b_eq - p.A_eq @ x if nE else np.zeros(0)
        if self.method == "nullspace":
            Hd = H.toarray()
            Z = self.Z
            dx0 = self.A_pinv @ r_eq if nE else np.zeros(p.n)
            if Z.shape[1] == 0:
                dx = dx0
            else:
                R = Z.T @ Hd @ Z
                rhs = -(Z.T @ (g + Hd @ dx0))
                try:
                    c = sla.cho_factor(R)
                    dx = dx0 + Z @ sla.cho_solve(c, rhs)
                except np.linalg.LinAlgError:
                    dx = dx0 + Z @ sla.lstsq(R, rhs)[0]
            if nE:
                w = sla.lstsq(self.A_dense.T, -(g + Hd @ dx))[0]
            else:
                w = np.zeros(0)
        elif self.border:
            # last variable couples to every row: eliminate it from the sparse system
            n1 = p.n - 1
            H = sp.csc_matrix(H)
            Hm = H[:n1, :n1]
            hv = H[:n1, n1].toarray().ravel()
            hss = float(H[n1, n1])
            dg = Hm.diagonal()
            scale = 1.0 / np.sqrt(np.where(dg > 0, dg, 1.0))
            D = sp.diags(scale)
            As = p.A_eq[:, :n1] @ D
            K = sp.bmat([[D @ Hm @ D, As.T], [As, None]], format="csc") if nE else sp.csc_matrix(D @ Hm @ D)
            solve_k = _factor_kkt(K, n1)
            r = np.concatenate([-scale * g[:n1], r_eq])
            kv = np.concatenate([scale * hv, np.zeros(nE)])
            y1 = solve_k(r)
            z = solve_k(kv)
            ds = (-g[n1] - kv @ y1) / (hss - kv @ z)
            y = y1 - z * ds
            dx = np.concatenate([scale * y[:n1], [ds]])
            w = y[n1:]
        else:
            dg = H.diagonal()
            scale = 1.0 / np.sqrt(np.where(dg > 0, dg, 1.0))
            D = sp.diags(scale)
            Hs = D @ H @ D
            if nE:
                As = p.A_eq @ D
                K = sp.bmat([[Hs, As.T], [As, None]], format="csc")
                rhs = np.concatenate([-scale * g, r_eq])
            else:
                K = sp.csc_matrix(Hs)
                rhs = -scale * g
            sol = _factor_kkt(K, p.n)(rhs)
            dx = scale * sol[: p.n]
            w = sol[p.n:]
        # dx' H dx rather than -g' dx: the latter cancels badly once |g| is large
        dec2 = max(float(dx @ (H @ dx)), 0.0)
        return dx, w, dec2, g, slacks

    def merit_change(self, x, dx, alpha, t, slacks):
        """Change of ``t f - sum log s`` along ``alpha * dx``; ``inf`` outside the domain."""
        p = self.p
        step = alpha * dx
        s_g, s_l, s_u = slacks
        ds_g = -(p.G @ step) if s_g.size else np.zeros(0)
        ds_l = step[self.fl]
        ds_u = -step[self.fu]
        total = 0.0
        for s, ds in ((s_g, ds_g), (s_l, ds_l), (s_u, ds_u)):
            if s.size:
                ratio = ds / s
                if np.any(ratio <= -1.0):
                    return math.inf
                total -= float(np.sum(np.log1p(ratio)))
        if p.cubic_index.size and np.any(p.cubic_shift - (x + step)[p.cubic_index] < 0):
            return math.inf
        return t * p.objective_change(x, step) + total

    def center(self, x, t, opts: SolverOptions, budget: int, stop=None):
        """Damped Newton centering. Returns ``(x, w, iterations, converged)``."""
        it = 0
        w = np.zeros(self.p.num_eq)
        prev = math.inf
        while True:
            dx, w, dec2, g, slacks = self.newton(x, t)
            done = dec2 / 2.0 <= opts.inner_tolerance
            # quadratic convergence has stopped: we are at the solve's noise floor
            stalled = dec2 < 1e-6 and dec2 > 0.25 * prev
            if done or stalled or it >= min(budget, opts.max_inner):
                return x, w, it, done or stalled
            prev = dec2
            alpha = 1.0
            slope = -dec2
            accepted = False
            while alpha > 1e-14:
                delta = self.merit_change(x, dx, alpha, t, slacks)
                if delta <= 0.01 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
            it += 1
            if not accepted:
                # no further decrease is representable; accept the current point
                return x, w, it, dec2 / 2.0 <= 1e3 * opts.inner_tolerance or dec2 < 1e-10
            x = x + alpha * dx
            if stop is not None and stop(x):
                return x, w, it, True


KKT_REGULARIZATION = 1e-10


def _factor_kkt(K: sp.csc_matrix, n: int):
    """Factor the (diagonally scaled) KKT matrix ``K``; returns a solve function.

    A threshold-pivoting LU copes with the extreme spread of barrier
    curvatures near the optimum. Should it fail, the quasi-definite
    perturbation ``diag(+eps, -eps)`` makes a pivot-free factorization
    possible; refinement against the unperturbed ``K`` then removes the
    perturbation error.
    """
    size = K.shape[0]
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError:
        signs = np.concatenate([np.ones(n), -np.ones(size - n)])
        Kreg = sp.csc_matrix(K + sp.diags(KKT_REGULARIZATION * signs))
        lu = spla.splu(Kreg, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})

    absK = abs(K)

    def solve_rhs(rhs):
        target = 1e-14 * (1.0 + _inf_norm(rhs))
        sol = _refine(lu, K, absK, rhs, target)
        if sol is None:
            raise SolverError("KKT system could not be solved accurately")
        return sol

    return solve_rhs


BACKWARD_ERROR_FLOOR = 4 * np.finfo(float).eps
BACKWARD_ERROR_LIMIT = 1e-10


def _backward_error(absK, sol, res, rhs) -> float:
    """Componentwise relative backward error ``max |r| / (|K| |x| + |b|)``.

    Denominators are floored at ``eps`` times their largest value so rows
    whose entries have all but underflowed do not dominate.
    """
    denom = absK @ np.abs(sol) + np.abs(rhs)
    floor = np.finfo(float).eps * float(np.max(denom, initial=0.0))
    denom = np.maximum(denom, floor)
    if not np.all(denom > 0):
        return 0.0 if not np.any(res) else math.inf
    return float(np.max(np.abs(res) / denom, initial=0.0))


def _refine(lu, K, absK, rhs, target, steps: int = 3):
    """Iterative refinement; ``None`` if the residual does not settle.

    Stops once the residual is below ``target`` or at rounding level (the
    backward error cannot improve further); fails when the backward error
    stays above ``BACKWARD_ERROR_LIMIT``.
    """
    sol = lu.solve(rhs)
    res = rhs - K @ sol
    for _ in range(steps):
        if _inf_norm(res) <= target or _backward_error(absK, sol, res, rhs) <= BACKWARD_ERROR_FLOOR:
            return sol
        sol = sol + lu.solve(res)
        res = rhs - K @ sol
    if not np.all(np.isfinite(sol)) or _backward_error(absK, sol, res, rhs) > BACKWARD_ERROR_LIMIT:
        return None
    return sol


def _least_norm_point(A: sp.csr_matrix, b: np.ndarray, n: int) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros(n)
    AAt = sp.csc_matrix(A @ A.T)
    try:
        y = spla.splu(AAt).solve(b)
    except RuntimeError as exc:
        raise ValueError("equality rows are linearly dependent") from exc
    return A.T @ y


def check_feasibility(program: ConvexProgram, options: Optional[SolverOptions] = None) -> FeasibilityResult:
    """Phase 1: find a strictly feasible point or certify infeasibility.

    Minimizes a common slack ``s`` subject to ``g_i(x) <= s`` for every
    inequality and finite bound, keeping ``A x = b``. A negative optimal slack
    gives a strictly feasible point; a positive one is an infeasibility
    certificate whose active constraints (positive multipliers) are reported.
    """
    opts = options or SolverOptions()
    p = program
    p.check()
    n = p.n
    if n == 0:
        ok = p.num_eq == 0 or _inf_norm(p.b_eq) == 0.0
        return FeasibilityResult(ok, np.zeros(0), 0.0 if ok else _inf_norm(p.b_eq),
                                 [] if ok else sorted(set(p.eq_labels)))
    x0 = _least_norm_point(p.A_eq, p.b_eq, n)
    eq_res = _inf_norm(p.A_eq @ x0 - p.b_eq) if p.num_eq else 0.0
    if eq_res > 1e-9 * (1.0 + _inf_norm(p.b_eq)):
        return FeasibilityResult(False, None, eq_res, sorted(set(p.eq_labels)),
                                 violated_eq=np.arange(p.num_eq))

    fl = np.flatnonzero(np.isfinite(p.lb))
    fu = np.flatnonzero(np.isfinite(p.ub))
    m = p.num_ineq + fl.size + fu.size
    if m == 0:
        return FeasibilityResult(True, x0, 0.0)

    # all inequalities as rows of [x, s]
    rows = [p.G]
    rhs = [p.h]
    if fl.size:
        rows.append(sp.csr_matrix((-np.ones(fl.size), (np.arange(fl.size), fl)), shape=(fl.size, n)))
        rhs.append(-p.lb[fl])
    if fu.size:
        rows.append(sp.csr_matrix((np.ones(fu.size), (np.arange(fu.size), fu)), shape=(fu.size, n)))
        rhs.append(p.ub[fu])
    Gx = sp.vstack(rows, format="csr")
    hx = np.concatenate(rhs)
    viol0 = float(np.max(Gx @ x0 - hx))
    if viol0 < 0:
        # least-norm point is already strictly feasible
        return FeasibilityResult(True, x0, viol0)

    # bounded below so the auxiliary problem always has an optimum
    span = 1.0 + _inf_norm(x0) + _inf_norm(hx)
    s_floor = -span
    G1 = sp.hstack([Gx, -np.ones((m, 1))], format="csr")
    A1 = sp.hstack([p.A_eq, sp.csr_matrix((p.num_eq, 1))], format="csr")
    lin = np.zeros(n + 1)
    lin[-1] = 1.0
    lb1 = np.full(n + 1, -np.inf)
    lb1[-1] = s_floor
    aux = ConvexProgram.create(
        n + 1, linear=lin, A_eq=A1, b_eq=p.b_eq, G=G1, h=hx, lb=lb1,
        eq_labels=p.eq_labels,
        ineq_labels=list(p.ineq_labels) + [p.lb_labels[i] for i in fl] + [p.ub_labels[i] for i in fu],
    )
    z = np.concatenate([x0, [viol0 + 1.0]])
    bar = _Barrier(aux, opts.method, border=True)
    # start where the slack objective and the barrier have comparable weight
    t = max(1.0, bar.m / (z[-1] - s_floor))
    iters = 0
    feasible = False
    w = np.zeros(p.num_eq)
    while iters < opts.max_iterations:
        z, w, it, centered = bar.center(z, t, opts, opts.max_iterations - iters, stop=lambda zz: zz[-1] < 0.0)
        iters += it
        if z[-1] < 0.0:
            feasible = True
            break
        gap = bar.m / t
        # s - m/t bounds the optimal slack from below only at a centered point
        if centered and (z[-1] - gap > 0.0 or gap < 1e-10 * span):
            break
        t *= opts.mu
    if feasible:
        return FeasibilityResult(True, z[:-1], float(z[-1]), iterations=iters)

    # duals of the auxiliary problem certify which constraints conflict
    slack = hx + z[-1] - Gx @ z[:-1]
    lam = 1.0 / (t * slack)
    nu = w / t if w.size else w
    lam_thresh = 1e-3 / m
    active = np.flatnonzero(lam > lam_thresh)
    eq_active = np.flatnonzero(np.abs(nu) > 1e-6 * max(1.0, _inf_norm(nu))) if nu.size else np.zeros(0, dtype=np.int64)
    labels_ineq = aux.ineq_labels
    fams = {labels_ineq[i] for i in active} | {p.eq_labels[i] for i in eq_active}
    n_g = p.num_ineq
    act_g = active[active < n_g]
    act_l = fl[active[(active >= n_g) & (active < n_g + fl.size)] - n_g]
    act_u = fu[active[active >= n_g + fl.size] - n_g - fl.size]
    return FeasibilityResult(False, None, float(z[-1]), sorted(fams),
                             violated_eq=eq_active, violated_ineq=act_g,
                             violated_lb=act_l, violated_ub=act_u, iterations=iters)


def solve(program: ConvexProgram, options: Optional[SolverOptions] = None,
          x0: Optional[np.ndarray] = None) -> Solution:
    """Minimize ``program`` with the log-barrier method.

    ``x0``, when given, must be strictly feasible and satisfy the equalities;
    otherwise phase 1 provides the starting point. The result always carries
    residuals recomputed by :func:`kkt_residuals`.
    """
    opts = options or SolverOptions()
    p = program
    p.check()
    n = p.n
    fl = np.isfinite(p.lb)
    fu = np.isfinite(p.ub)
    empty = Solution(np.zeros(n), np.zeros(p.num_eq), np.zeros(p.num_ineq),
                     np.zeros(n), np.zeros(n), math.nan, "infeasible", 0)
    if n == 0:
        feas = check_feasibility(p, opts)
        if not feas.feasible:
            return empty
        sol = Solution(np.zeros(0), np.zeros(p.num_eq), np.zeros(p.num_ineq),
                       np.zeros(0), np.zeros(0), p.constant, "optimal", 0, history=[p.constant])
        sol.residuals = kkt_residuals(p, sol)
        return sol

    iters = 0
    if x0 is None:
        feas = check_feasibility(p, opts)
        iters += feas.iterations
        if not feas.feasible:
            empty.iterations = iters
            return empty
        x = feas.x.copy()
    else:
        x = np.asarray(x0, dtype=float).copy()

    bar = _Barrier(p, opts.method)
    if not bar.domain_ok(x):
        raise ValueError("starting point is not strictly feasible")
    m = bar.m
    t = opts.t0
    history = []
    outer = 0
    status = "max_iterations"
    w = np.zeros(p.num_eq)
    while True:
        x, w, it, _ = bar.center(x, t, opts, max(opts.max_iterations - iters, 1))
        iters += it
        outer += 1
        fval = p.objective(x)
        history.append(fval)
        if opts.callback is not None:
            opts.callback({"outer": outer, "t": t, "objective": fval, "iterations": iters})
        if m == 0 or m / t <= 0.5 * opts.tolerance * (1.0 + abs(fval)):
            status = "optimal"
            break
        if iters >= opts.max_iterations:
            break
        t *= opts.mu

    # multipliers at the final point
    dx, w, dec2, _, (s_g, s_l, s_u) = bar.newton(x, t)
    nu = w / t if w.size else np.zeros(0)

    # first-order corrected 1/(t s): exact for the Newton stationarity equation
    def _dual(s, ds):
        return np.maximum(1.0 / (t * s) * (1.0 - ds / s), 0.0)

    lam_ineq = _dual(s_g, -(p.G @ dx)) if s_g.size else np.zeros(0)
    lam_lb = np.zeros(n)
    lam_ub = np.zeros(n)
    lam_lb[fl] = _dual(s_l, dx[fl])
    lam_ub[fu] = _dual(s_u, -dx[fu])
    sol = Solution(x, nu, lam_ineq, lam_lb, lam_ub, p.objective(x), status, iters,
                   outer_iterations=outer, history=history, t=t)
    sol.residuals = kkt_residuals(p, sol)
    if status == "optimal" and sol.residuals.max() > opts.tolerance:
        sol.status = "max_iterations"
    return sol
