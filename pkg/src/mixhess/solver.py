"""Damped Newton for the regularized Neumann problem and the eps -> 0 continuation.

Discretely, for fixed eps > 0 we solve::

    G(D2u) - alpha_1 = 0                at interior nodes
    u_nu + eps*u - phi = 0              at band nodes (closest boundary point)

with ``G(W) = (det W - alpha_0) / tr W`` (planar case, k = 2). As eps shrinks,
``-eps * mean(u)`` tends to the constant c of the limit problem
``u_nu = c + phi`` and ``u - mean(u)`` to its normalized solution.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .grid import DiscreteState, gradients, hessians
from .hessop import comparison_coefficient

log = logging.getLogger(__name__)


class ProblemError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, eps=None, iteration=None):
        super().__init__(message)
        self.eps = eps
        self.iteration = iteration

    def __str__(self):
        where = []
        if self.eps is not None:
            where.append(f"eps={self.eps:g}")
        if self.iteration is not None:
            where.append(f"iteration {self.iteration}")
        msg = super().__str__()
        return f"{msg} ({', '.join(where)})" if where else msg


class LineSearchStall(SolverError):
    pass


class MaxIters(SolverError):
    pass


@dataclass
class NewtonSettings:
    max_iter: int = 50
    tol_res: float = 1e-9
    tol_step: float = 1e-14
    tau_safety: float = 1e-12
    min_damping: float = 2.0 ** -20
    lin_tol: float = 1e-12


@dataclass
class EpsSchedule:
    eps0: float = 0.1
    ratio: float = 0.5
    eps_min: float = 1e-4
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValueError("schedule ratio must lie in (0, 1)")
        if not self.eps0 > self.eps_min > 0:
            raise ValueError("need eps0 > eps_min > 0")

    def levels(self):
        out = []
        eps = self.eps0
        while eps > self.eps_min * (1 + 1e-12):
            out.append(eps)
            eps *= self.ratio
        out.append(self.eps_min)
        return out


@dataclass
class Problem:
    """Discrete data: coefficients at every unknown node, phi at boundary points.

    ``alpha_inf`` / ``alpha_sup`` are the extremes of each coefficient over
    the closed domain (nodes plus boundary samples).
    """

    grid: object
    alpha: np.ndarray      # (k, N)
    phi: np.ndarray        # (n_band,)
    alpha_inf: np.ndarray  # (k,)
    alpha_sup: np.ndarray  # (k,)
    phi_max_abs: float

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        k = self.alpha.shape[0]
        if k < 2:
            raise ProblemError("the equation needs k >= 2")
        if k > 2:
            raise ProblemError(f"k={k} exceeds the planar dimension n=2")
        if self.alpha.shape != (k, self.grid.n):
            raise ProblemError(f"alpha must have shape ({k}, {self.grid.n})")
        if not np.all(self.alpha_inf > 0) or not np.all(self.alpha > 0):
            bad = int(np.argmin(self.alpha_inf))
            raise ProblemError(f"alpha_{bad} is not positive on the domain "
                               f"(min {self.alpha_inf[bad]:g})")
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != (len(self.grid.band),):
            raise ProblemError("phi must have one value per band node")
        inter = self.grid.interior
        self.a0 = np.ascontiguousarray(self.alpha[0, inter])
        self.a1 = np.ascontiguousarray(self.alpha[1, inter])

    @property
    def k(self):
        return self.alpha.shape[0]

    @classmethod
    def from_functions(cls, grid, alpha_funcs, phi_func, boundary_samples=2048):
        """Evaluate vectorized callables ``f(x, y)`` on the grid."""
        bx, by = grid.bpoint[:, 0], grid.bpoint[:, 1]
        sx, sy = grid.domain.boundary_samples(boundary_samples)
        alpha, inf, sup = [], [], []
        for f in alpha_funcs:
            nodes = np.broadcast_to(np.asarray(f(grid.x, grid.y), dtype=float), grid.x.shape)
            edge = np.concatenate([np.ravel(f(bx, by)), np.ravel(f(sx, sy))])
            alpha.append(nodes)
            inf.append(min(nodes.min(), edge.min()))
            sup.append(max(nodes.max(), edge.max()))
        phi = np.broadcast_to(np.asarray(phi_func(bx, by), dtype=float), bx.shape)
        phi_edge = np.ravel(phi_func(sx, sy))
        phi_max = float(max(np.abs(phi).max(), np.abs(phi_edge).max()))
        return cls(grid=grid, alpha=np.array(alpha), phi=np.array(phi),
                   alpha_inf=np.array(inf), alpha_sup=np.array(sup), phi_max_abs=phi_max)

    def shifted_phi(self, K):
        return Problem(grid=self.grid, alpha=self.alpha, phi=self.phi + K,
                       alpha_inf=self.alpha_inf, alpha_sup=self.alpha_sup,
                       phi_max_abs=float(np.abs(self.phi + K).max()))


@dataclass
class NewtonStats:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    dampings: list = field(default_factory=list)
    linear_residuals: list = field(default_factory=list)
    res_interior: float = np.nan
    res_boundary: float = np.nan


@dataclass
class EpsPathRecord:
    eps: float
    state: DiscreteState
    c_est: float
    newton: NewtonStats
    sup_grad: float
    sup_hess: float
    sup_eps_u: float
    audit: object = None


@dataclass
class LimitSolution:
    c: float
    v: np.ndarray
    records: list
    cauchy: float

    @property
    def eps_path(self):
        return [r.eps for r in self.records]

    @property
    def c_path(self):
        return [r.c_est for r in self.records]


def initial_guess(problem, scale=1.0):
    """Admissible quadratic ``scale * A |x - x_c|^2`` about the domain centre."""
    A = comparison_coefficient(problem.alpha_sup, 2, problem.k)
    g = problem.grid
    cx, cy = g.domain.center
    u = scale * A * ((g.x - cx) ** 2 + (g.y - cy) ** 2)
    return DiscreteState.from_values(g, u, k=problem.k)


def _boundary_rows(problem, state, eps):
    g = problem.grid
    rowsum = np.asarray(g.bvalue.sum(axis=1)).ravel()
    return (g.bderiv @ state.w + eps * (g.bvalue @ state.w + state.offset * rowsum)
            - problem.phi)


def residual(problem, state, eps, tau=0.0):
    """``(F_interior, F_boundary, admissible)`` for a state."""
    g = problem.grid
    F_int, ok = kernels.interior_residual(state.w, g.nbr, 1.0 / g.h ** 2,
                                          problem.a0, problem.a1, tau)
    return F_int, _boundary_rows(problem, state, eps), ok


def _norm(F_int, F_bnd):
    return max(np.abs(F_int).max(initial=0.0), np.abs(F_bnd).max(initial=0.0))


def _jacobian(problem, state, eps, F_int):
    g = problem.grid
    F_int, vals, trace = kernels.interior_jacobian(state.w, g.nbr, 1.0 / g.h ** 2,
                                                   problem.a0, problem.a1)
    scale = 1.0 / trace
    rows_int = np.repeat(g.interior, 9)
    J_int = sp.coo_matrix(((vals * scale[:, None]).ravel(), (rows_int, g.nbr.ravel())),
                          shape=(g.n, g.n))
    B = (g.bderiv + eps * g.bvalue).tocoo()
    J_bnd = sp.coo_matrix((B.data, (g.band[B.row], B.col)), shape=(g.n, g.n))
    return (J_int + J_bnd).tocsc(), scale


def _linear_solve(J, rhs, null_image, lin_tol):
    """Solve ``J du = rhs`` with ``du = d + s*1`` and ``mean(d) = 0``.

    Interior stencil rows annihilate constants, so near the pure Neumann
    limit du is dominated by a large constant. Carrying that constant as the
    separate unknown ``s`` (with ``J @ 1 = null_image`` known structurally)
    keeps every product with J free of cancellation, which is what lets
    iterative refinement reach a relative residual of ``lin_tol``.

    Returns ``(d, s, relative_residual)``.
    """
    n = J.shape[0]
    ones = sp.csr_matrix(np.full((1, n), 1.0 / n))
    K = sp.bmat([[J, sp.csc_matrix(null_image[:, None])], [ones, None]], format="csc")
    lu = splu(K)
    norm_rhs = np.linalg.norm(rhs)
    if norm_rhs == 0:
        return np.zeros(n), 0.0, 0.0

    def resid(d, s):
        r = np.empty(n + 1)
        r[:n] = rhs - (J @ d + s * null_image)
        r[n] = -d.mean()
        return r

    z = lu.solve(np.append(rhs, 0.0))
    d, s = z[:n], z[n]
    r = resid(d, s)
    rel = np.linalg.norm(r) / norm_rhs
    for _ in range(3):
        if rel <= lin_tol:
            break
        z = lu.solve(r)
        d, s = d + z[:n], s + z[n]
        r = resid(d, s)
        rel = np.linalg.norm(r) / norm_rhs
    return d, s, rel


def newton_solve(problem, eps, start, settings=None):
    """Solve the regularized problem at one eps from an admissible start.

    Returns ``(state, stats)``. Every accepted iterate is admissible at every
    interior node with margin ``tau_safety`` and strictly lowers the max-norm
    of the residual.
    """
    if not eps > 0:
        raise ValueError("eps must be positive; the eps = 0 problem is singular")
    s = settings or NewtonSettings()
    g = problem.grid
    state = start
    F_int, F_bnd, ok = residual(problem, state, eps, s.tau_safety)
    if not ok.all():
        raise SolverError(f"start is not admissible at {int((~ok).sum())} interior nodes",
                          eps=eps, iteration=0)
    res = _norm(F_int, F_bnd)
    stats = NewtonStats(residuals=[res])
    rowsum = np.asarray(g.bvalue.sum(axis=1)).ravel()
    it = 0
    while res > s.tol_res:
        if it >= s.max_iter:
            raise MaxIters(f"no convergence, residual {res:.3e}", eps=eps, iteration=it)
        it += 1
        J, scale = _jacobian(problem, state, eps, F_int)
        rhs = np.empty(g.n)
        rhs[g.interior] = -F_int * scale
        rhs[g.band] = -F_bnd
        null_image = np.zeros(g.n)
        null_image[g.band] = eps * rowsum
        d, shift, rel = _linear_solve(J, rhs, null_image, s.lin_tol)
        stats.linear_residuals.append(rel)
        if rel > s.lin_tol:
            log.warning("linear solve relative residual %.2e above %.0e (eps=%g)",
                        rel, s.lin_tol, eps)
        step = max(np.abs(d).max(), abs(shift))
        if step <= s.tol_step * max(1.0, np.abs(state.w).max(), abs(state.offset)):
            raise LineSearchStall(f"Newton step {step:.2e} vanished at residual {res:.3e}",
                                  eps=eps, iteration=it)
        t = 1.0
        while True:
            trial = state.shifted(d, t, shift)
            T_int, T_bnd, ok = residual(problem, trial, eps, s.tau_safety)
            if ok.all():
                trial_res = _norm(T_int, T_bnd)
                if trial_res < res:
                    break
            t *= 0.5
            if t < s.min_damping:
                raise LineSearchStall(f"no admissible decreasing step, residual {res:.3e}",
                                      eps=eps, iteration=it)
        state, F_int, F_bnd, res = trial, T_int, T_bnd, trial_res
        stats.residuals.append(res)
        stats.dampings.append(t)
        log.debug("eps=%g it=%d res=%.3e damping=%g", eps, it, res, t)
    stats.iterations = it
    stats.res_interior = float(np.abs(F_int).max(initial=0.0))
    stats.res_boundary = float(np.abs(F_bnd).max(initial=0.0))
    return state, stats


def path_diagnostics(state):
    """(sup |Du|, sup |D2u| spectral) over interior nodes."""
    ux, uy = gradients(state.grid, state.w)
    hxx, hyy, hxy = hessians(state.grid, state.w)
    spec = 0.5 * np.abs(hxx + hyy) + np.hypot(0.5 * (hxx - hyy), hxy)
    return float(np.hypot(ux, uy).max()), float(spec.max())


def richardson(eps1, c1, eps2, c2):
    """Eliminate the O(eps) term from two estimates of c."""
    return (eps1 * c2 - eps2 * c1) / (eps1 - eps2)


def continuation(problem, schedule=None, start=None, audit=None):
    """Warm-started Newton over decreasing eps, then extrapolate to eps = 0.

    ``audit(record, problem)`` is called on each accepted record and its
    return value stored on it.
    """
    schedule = schedule or EpsSchedule()
    state = start if start is not None else initial_guess(problem)
    records = []
    prev_eps = None
    for eps in schedule.levels():
        if prev_eps is not None:
            # constant predictor: u^eps ~ -c/eps + v, so scale the mean
            state = DiscreteState(grid=state.grid, w=state.w,
                                  offset=state.offset * prev_eps / eps, k=state.k)
        try:
            state, stats = newton_solve(problem, eps, state, schedule.newton)
        except SolverError as exc:
            exc.eps = eps
            raise
        sup_grad, sup_hess = path_diagnostics(state)
        rec = EpsPathRecord(eps=eps, state=state, c_est=-eps * float(state.u.mean()),
                            newton=stats, sup_grad=sup_grad, sup_hess=sup_hess,
                            sup_eps_u=float(np.abs(eps * state.u).max()))
        if audit is not None:
            rec.audit = audit(rec, problem)
        records.append(rec)
        log.info("eps=%g c_est=%.12g newton=%d", eps, rec.c_est, stats.iterations)
        prev_eps = eps
    if len(records) >= 2:
        r1, r2 = records[-2], records[-1]
        c = richardson(r1.eps, r1.c_est, r2.eps, r2.c_est)
    else:
        c = records[-1].c_est
    cauchy = max((abs(a.c_est - b.c_est) for a, b in zip(records, records[1:])), default=0.0)
    w = records[-1].state.w
    return LimitSolution(c=c, v=w - w.mean(), records=records, cauchy=cauchy)
