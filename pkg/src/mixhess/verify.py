"""Audits of computed states against the checkable estimates, plus a brute-force oracle."""
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import hessop
from .grid import hessian_matrices

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass
class AuditEntry:
    name: str
    status: str
    margin: float = np.nan
    detail: str = ""
    location: tuple = None

    def line(self):
        out = f"{self.name}: {self.status.upper()}"
        if np.isfinite(self.margin):
            out += f" margin={self.margin!r}"
        if self.location is not None:
            out += f" at=({self.location[0]!r}, {self.location[1]!r})"
        if self.detail:
            out += f" | {self.detail}"
        return out


@dataclass
class AuditReport:
    entries: list = field(default_factory=list)

    def add(self, entry):
        if isinstance(entry, AuditReport):
            self.entries.extend(entry.entries)
        elif isinstance(entry, (list, tuple)):
            self.entries.extend(entry)
        else:
            self.entries.append(entry)
        return self

    @property
    def failed(self):
        return [e for e in self.entries if e.status == FAIL]

    @property
    def ok(self):
        return not self.failed

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_text(self):
        lines = [e.line() for e in self.entries]
        lines.append(f"overall: {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def explicit_m0(problem, k=None):
    """Return ``(M0, A)`` with M0 = max|phi| + 2 A diam + A diam^2."""
    k = problem.k if k is None else k
    A = hessop.comparison_coefficient(problem.alpha_sup, 2, k)
    diam = problem.grid.domain.diameter()
    return problem.phi_max_abs + 2.0 * A * diam + A * diam ** 2, A


def c0_bound_audit(state, eps, problem):
    """Check sup |eps u| <= M0 at every node."""
    m0, A = explicit_m0(problem)
    vals = np.abs(eps * state.u)
    i = int(np.argmax(vals))
    sup = float(vals[i])
    status = PASS if sup <= m0 else FAIL
    return AuditEntry("c0_bound", status, margin=m0 - sup,
                      detail=f"sup|eps u|={sup!r} M0={m0!r} A={A!r} eps={eps!r}",
                      location=state.grid.coords(i))


def _uniformity(records, eps0, attr, name, tol=0.10):
    late = [r for r in records if r.eps <= eps0 / 4]
    if len(records) < 2 or len(late) < 2:
        return AuditEntry(name, SKIPPED, detail="fewer than two records with eps <= eps0/4")
    worst, where = 0.0, None
    for a, b in zip(late, late[1:]):
        va, vb = getattr(a, attr), getattr(b, attr)
        rel = abs(va - vb) / max(abs(va), abs(vb), np.finfo(float).tiny)
        if rel >= worst:
            worst, where = rel, (a.eps, b.eps)
    status = PASS if worst <= tol else FAIL
    return AuditEntry(name, status, margin=tol - worst,
                      detail=f"max relative variation {worst!r} between eps {where[0]!r} and {where[1]!r}")


def gradient_bound_audit(records, eps0):
    """sup |Du^eps| must stay within 10% between consecutive late eps levels."""
    return _uniformity(records, eps0, "sup_grad", "gradient_uniformity")


def hessian_bound_audit(records, eps0):
    """Same uniformity test for the sup of the per-node spectral Hessian norm."""
    return _uniformity(records, eps0, "sup_hess", "hessian_uniformity")


def _worst(name, margin, grid, nodes, detail, strict=True):
    i = int(np.argmin(margin))
    m = float(margin[i])
    bad = m <= 0 if strict else m < 0
    return AuditEntry(name, FAIL if bad else PASS, margin=m, detail=detail,
                      location=grid.coords(int(nodes[i])))


def lemma_audits(state, problem, shell_tol=1e-8):
    """Ratio, trace and weighted-trace checks at every interior node.

    Checks conditional on the equation are skipped when some node is off-shell.
    """
    grid = state.grid
    nodes = grid.interior
    k = problem.k
    W = hessian_matrices(grid, state.w)
    alpha = problem.alpha[:, nodes].T
    entries = []
    try:
        lam, Q = hessop.spectral(W)
        g, dg, gk, gl = hessop.lambda_parts(lam, alpha)
    except hessop.NotAdmissible:
        return [AuditEntry(n, SKIPPED, detail="state not admissible")
                for n in ("ratio_bounds", "trace_bounds", "weighted_trace")]

    off = np.abs(g - alpha[:, k - 1])
    on_shell = bool(np.all(off <= shell_tol * np.maximum(1.0, alpha[:, k - 1])))
    n = W.shape[-1]

    trace = dg.sum(axis=-1)
    lo, hi = (n - k + 1) / k, float(n - k + 1)
    entries.append(_worst("trace_lower", trace - lo, grid, nodes,
                          f"sum G^ii >= {float(lo)!r}", strict=False))
    pos = g > 0
    if np.any(pos):
        entries.append(_worst("trace_upper", (hi - trace)[pos], grid, nodes[pos],
                              f"sum G^ii < {hi!r} where G > 0"))

    # sum_ij G^ij u_ij equals sum_i lam_i dG/dlam_i
    wtrace = np.sum(lam * dg, axis=-1)
    ident = gk + sum((k - 1 - l) * alpha[:, l] * gl[:, l] for l in range(k - 1))
    err = np.abs(wtrace - ident) / np.maximum(1.0, np.abs(ident))
    entries.append(_worst("weighted_trace_identity", 1e-10 - err, grid, nodes,
                          f"max relative error {float(err.max())!r}", strict=False))

    if not on_shell:
        reason = f"not-on-shell (max |G - alpha_{k - 1}| = {float(off.max())!r})"
        entries.append(AuditEntry("ratio_bounds", SKIPPED, detail=reason))
        entries.append(AuditEntry("weighted_trace_lower", SKIPPED, detail=reason))
        return entries

    margins = hessop.ratio_bounds_margins(lam, alpha, problem.alpha_inf, problem.alpha_sup)
    for name in sorted(margins):
        strict = name != "quotient_lower"
        entries.append(_worst(f"ratio_bounds.{name}", margins[name], grid, nodes,
                              "bound minus quantity (negative is a violation)", strict=strict))
    entries.append(_worst("weighted_trace_lower", wtrace - problem.alpha_inf[k - 1],
                          grid, nodes, f"sum G^ij u_ij >= {float(problem.alpha_inf[k - 1])!r}",
                          strict=False))
    return entries


def path_audit(records, problem, eps0):
    """Full report for a continuation path."""
    report = AuditReport()
    for r in records:
        e = c0_bound_audit(r.state, r.eps, problem)
        e.name = f"c0_bound[eps={r.eps!r}]"
        report.add(e)
    report.add(gradient_bound_audit(records, eps0))
    report.add(hessian_bound_audit(records, eps0))
    report.add(lemma_audits(records[-1].state, problem))
    return report


def _sigma_subsets(lam, m):
    if m == 0:
        return 1.0
    return sum(np.prod(c) for c in itertools.combinations(lam, m))


def brute_force_pde_oracle(grid, u, alpha, k=2):
    """sigma_k - sum_l alpha_l sigma_l at interior nodes, by subset enumeration.

    ``alpha`` has shape (k, N) over all unknowns. Eigenvalues come from
    LAPACK's symmetric solver rather than the package's own routine.
    """
    rows, cols = np.nonzero(grid.ids >= 0)
    if np.ptp(rows) + 1 > 12 or np.ptp(cols) + 1 > 12:
        raise ValueError("oracle is meant for grids of at most 12 x 12 unknowns")
    alpha = np.asarray(alpha, dtype=float)
    W = hessian_matrices(grid, np.asarray(u, dtype=float))
    out = np.empty(len(grid.interior))
    for j, node in enumerate(grid.interior):
        lam = np.linalg.eigvalsh(W[j])
        val = _sigma_subsets(lam, k)
        for l in range(k):
            val -= alpha[l, node] * _sigma_subsets(lam, l)
        out[j] = val
    return out


def sample_cone(rng, n, k, count, low=-10.0, high=10.0, max_rounds=1000):
    """Rejection-sample ``count`` tuples of length n in the cone of level k."""
    from .symfun import in_cone

    out, got = np.empty((count, n)), 0
    for _ in range(max_rounds):
        cand = rng.uniform(low, high, size=(4 * count, n))
        keep = cand[in_cone(cand, k)]
        take = min(len(keep), count - got)
        out[got:got + take] = keep[:take]
        got += take
        if got == count:
            return out
    raise RuntimeError(f"cone of level {k} in dimension {n} too thin to sample")


def random_rotation(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def sample_admissible_matrices(rng, n, k, count):
    """Symmetric matrices with cone-of-level-k spectra and random eigenvectors."""
    lam = sample_cone(rng, n, k, count)
    Q = np.stack([random_rotation(rng, n) for _ in range(count)])
    return (Q * lam[:, None, :]) @ np.swapaxes(Q, -1, -2)


def property_sweep(seed=0, samples=200):
    """Sampled operator properties; returns ``{name: worst margin}``.

    A non-negative margin means the property held on every sample.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for n in (2, 3):
        for k in range(2, n + 1):
            tag = f"n={n},k={k}"
            W = sample_admissible_matrices(rng, n, k, samples)
            alpha = rng.uniform(0.05, 2.0, size=(samples, k))
            grad = hessop.g_gradient(W, alpha)
            out[f"ellipticity[{tag}]"] = float(np.linalg.eigvalsh(grad).min())
            lam = hessop.spectral(W).values
            _, dg, gk, gl = hessop.lambda_parts(lam, alpha)
            ident = gk + sum((k - 1 - l) * alpha[:, l] * gl[:, l] for l in range(k - 1))
            err = np.abs(np.sum(lam * dg, axis=-1) - ident) / np.maximum(1.0, np.abs(ident))
            out[f"euler_identity[{tag}]"] = float(1e-10 - err.max())
            W2 = sample_admissible_matrices(rng, n, k, samples)
            mid, chord = hessop.concavity_probe(W, W2, alpha)
            out[f"concavity[{tag}]"] = float((mid - chord + 1e-12).min())
            tr, lo, hi = hessop.trace_bounds_check(W, alpha)
            g = hessop.lambda_parts(lam, alpha)[0]
            out[f"trace_lower[{tag}]"] = float((tr - lo).min())
            if np.any(g > 0):
                out[f"trace_upper[{tag}]"] = float((hi - tr)[g > 0].min())
    return out


def sample_regime(rng, n, k, count, mode="negative_lambda1", delta=0.5, eps=0.5,
                  max_rounds=2000):
    """Rejection-sample cone tuples meeting the hypotheses of a derivative-inequality mode.

    ``negative_lambda1``: entry 0 negative. ``pinch``: sorted descending with
    lam[0] >= delta*lam[1] and -lam[-1] >= eps*lam[0] > 0.
    """
    from .symfun import in_cone

    out, got = np.empty((count, n)), 0
    for _ in range(max_rounds):
        cand = rng.uniform(-10.0, 10.0, size=(8 * count, n))
        if mode == "negative_lambda1":
            cand[:, 0] = -np.abs(cand[:, 0])
            ok = in_cone(cand, k) & (cand[:, 0] < 0)
        elif mode == "pinch":
            cand = -np.sort(-cand, axis=-1)
            ok = (in_cone(cand, k) & (cand[:, 0] > 0) & (cand[:, -1] < 0)
                  & (cand[:, 0] >= delta * cand[:, 1]) & (-cand[:, -1] >= eps * cand[:, 0]))
        else:
            raise ValueError(f"unknown mode {mode!r}")
        keep = cand[ok]
        take = min(len(keep), count - got)
        out[got:got + take] = keep[:take]
        got += take
        if got == count:
            return out
    raise RuntimeError(f"regime {mode} with n={n}, k={k} too thin to sample")
