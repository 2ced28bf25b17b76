"""Cartesian grids on convex planar domains.

Nodes inside the closed domain are unknowns. A node whose 3x3 neighbourhood
lies entirely inside is *interior* and carries the PDE; every other inside
node is a *band* node and carries the boundary condition, imposed at its
closest boundary point by a one-sided quadratic fit along the inward normal.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

EXTERIOR, INTERIOR, BAND = 0, 1, 2
KIND_NAMES = {EXTERIOR: "exterior", INTERIOR: "interior", BAND: "band"}

# neighbour order used by every stencil: C, E, W, N, S, NE, NW, SE, SW
OFFSETS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1))

# depths of the two interpolated ray points, beyond the band node, in units of h
RAY_STEPS = (1.5, 3.0)


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    """Superellipse ``|dx/a|^p + |dy/b|^p <= 1`` around ``center``; p = 2 is an ellipse."""

    kind: str
    a: float
    b: float
    p: float = 2.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("disk", "ellipse", "superellipse"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("semi-axes must be positive")
        if self.p < 2:
            raise ValueError("superellipse exponent must be >= 2 for convexity")
        if self.kind == "disk" and (self.a != self.b or self.p != 2):
            raise ValueError("a disk has a == b and p == 2")
        if self.kind == "ellipse" and self.p != 2:
            raise ValueError("an ellipse has p == 2")

    @classmethod
    def disk(cls, radius=1.0, center=(0.0, 0.0)):
        return cls("disk", radius, radius, 2.0, tuple(center))

    @classmethod
    def ellipse(cls, a, b, center=(0.0, 0.0)):
        return cls("ellipse", a, b, 2.0, tuple(center))

    @classmethod
    def superellipse(cls, a, b, p, center=(0.0, 0.0)):
        return cls("superellipse", a, b, p, tuple(center))

    def level(self, x, y):
        dx = (np.asarray(x) - self.center[0]) / self.a
        dy = (np.asarray(y) - self.center[1]) / self.b
        return np.abs(dx) ** self.p + np.abs(dy) ** self.p - 1.0

    def contains(self, x, y):
        return self.level(x, y) <= 0.0

    def radius(self, theta):
        c, s = np.cos(theta), np.sin(theta)
        S = np.abs(c / self.a) ** self.p + np.abs(s / self.b) ** self.p
        return S ** (-1.0 / self.p)

    def _radius_derivative(self, theta):
        p = self.p
        c, s = np.cos(theta), np.sin(theta)
        S = np.abs(c / self.a) ** p + np.abs(s / self.b) ** p
        dS = (p * np.abs(c / self.a) ** (p - 1) * np.sign(c) * (-s) / self.a
              + p * np.abs(s / self.b) ** (p - 1) * np.sign(s) * c / self.b)
        return -(1.0 / p) * S ** (-1.0 / p - 1.0) * dS

    def boundary_point(self, theta):
        r = self.radius(theta)
        return self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)

    def boundary_samples(self, m=720):
        return self.boundary_point(np.linspace(0.0, 2 * np.pi, m, endpoint=False))

    def normal(self, x, y):
        """Outward unit normal at boundary points."""
        p = self.p
        dx = (np.asarray(x) - self.center[0]) / self.a
        dy = (np.asarray(y) - self.center[1]) / self.b
        gx = np.abs(dx) ** (p - 1) * np.sign(dx) / self.a
        gy = np.abs(dy) ** (p - 1) * np.sign(dy) / self.b
        norm = np.hypot(gx, gy)
        return gx / norm, gy / norm

    def curvature(self, x, y):
        p = self.p
        dx = (np.asarray(x) - self.center[0]) / self.a
        dy = (np.asarray(y) - self.center[1]) / self.b
        fx = p * np.abs(dx) ** (p - 1) * np.sign(dx) / self.a
        fy = p * np.abs(dy) ** (p - 1) * np.sign(dy) / self.b
        fxx = p * (p - 1) * np.abs(dx) ** (p - 2) / self.a ** 2
        fyy = p * (p - 1) * np.abs(dy) ** (p - 2) / self.b ** 2
        return (fxx * fy ** 2 + fyy * fx ** 2) / np.hypot(fx, fy) ** 3

    def curvature_range(self):
        """(kappa_min, kappa_max) of the boundary.

        Closed form for disks and ellipses. Superellipses are sampled; for
        p > 2 the curvature vanishes at the axis points so kappa_min is 0.
        """
        if self.p == 2:
            lo, hi = min(self.a, self.b), max(self.a, self.b)
            return lo / hi ** 2, hi / lo ** 2
        theta = np.concatenate([np.linspace(0, 2 * np.pi, 20000, endpoint=False),
                                np.arange(4) * np.pi / 2])
        kappa = self.curvature(*self.boundary_point(theta))
        return float(kappa.min()), float(kappa.max())

    def diameter(self):
        if self.p == 2:
            return 2.0 * max(self.a, self.b)
        theta = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
        return 2.0 * float(self.radius(theta).max())

    def project(self, x, y):
        """Closest boundary point to an inside point.

        Returns ``(bx, by, nx, ny, dist)`` with ``dist >= 0`` the distance to the
        boundary.
        """
        cx, cy = self.center
        if self.kind == "disk":
            dx, dy = x - cx, y - cy
            r = np.hypot(dx, dy)
            if r == 0.0:
                raise GridError("closest boundary point of the centre is not unique")
            nx, ny = dx / r, dy / r
            return cx + self.a * nx, cy + self.a * ny, nx, ny, self.a - r
        theta = np.linspace(0.0, 2 * np.pi, 1025)
        bx, by = self.boundary_point(theta)
        i = int(np.argmin((bx - x) ** 2 + (by - y) ** 2))

        def slope(t):
            px, py = self.boundary_point(t)
            r, dr = self.radius(t), self._radius_derivative(t)
            tx = dr * np.cos(t) - r * np.sin(t)
            ty = dr * np.sin(t) + r * np.cos(t)
            return (px - x) * tx + (py - y) * ty

        lo, hi = theta[max(i - 1, 0)], theta[min(i + 1, len(theta) - 1)]
        if i == 0 or i == len(theta) - 1:
            lo, hi = -theta[1], theta[1]
        flo, fhi = slope(lo), slope(hi)
        t = theta[i]
        if flo == 0.0:
            t = lo
        elif fhi == 0.0:
            t = hi
        elif flo < 0.0 < fhi:
            t = brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        bx, by = self.boundary_point(t)
        nx, ny = self.normal(bx, by)
        return float(bx), float(by), float(nx), float(ny), float(np.hypot(bx - x, by - y))


@dataclass
class Grid:
    domain: DomainSpec
    h: float
    x0: float
    y0: float
    kind: np.ndarray           # (ny, nx) node classification
    ids: np.ndarray            # (ny, nx) unknown index or -1
    x: np.ndarray              # (N,) unknown coordinates
    y: np.ndarray
    interior: np.ndarray       # (n_int,) unknown ids of interior nodes
    band: np.ndarray           # (n_band,) unknown ids of band nodes
    nbr: np.ndarray            # (n_int, 9) neighbour ids, order OFFSETS
    bpoint: np.ndarray         # (n_band, 2) closest boundary points
    bnormal: np.ndarray        # (n_band, 2) outward unit normals there
    bdist: np.ndarray          # (n_band,) distance to the boundary, >= 0
    bvalue: sp.csr_matrix      # (n_band, N): u at the boundary point
    bderiv: sp.csr_matrix      # (n_band, N): outward normal derivative there
    _row_of: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return len(self.x)

    @property
    def shape(self):
        return self.kind.shape

    def coords(self, node):
        return float(self.x[node]), float(self.y[node])

    def role(self, node):
        """``("interior", row)`` or ``("band", row)`` for an unknown id."""
        return self._row_of[int(node)]


def _lagrange3(t, nodes):
    """Weights of the quadratic interpolant through ``nodes`` evaluated at ``t``."""
    w = np.ones(3)
    for m in range(3):
        for j in range(3):
            if j != m:
                w[m] *= (t - nodes[j]) / (nodes[m] - nodes[j])
    return w


def _lagrange3_deriv(t, nodes):
    d = np.zeros(3)
    for m in range(3):
        denom = np.prod([nodes[m] - nodes[j] for j in range(3) if j != m])
        for j in range(3):
            if j == m:
                continue
            d[m] += np.prod([t - nodes[q] for q in range(3) if q not in (m, j)])
        d[m] /= denom
    return d


def build_grid(domain, h, min_across=16):
    """Classify a Cartesian grid of spacing ``h`` over ``domain``.

    Raises GridError when fewer than ``min_across`` spacings fit across the
    narrow width of the domain or when a boundary closure needs a node
    outside the domain.
    """
    if h <= 0:
        raise GridError("grid spacing must be positive")
    if 2.0 * min(domain.a, domain.b) / h < min_across:
        raise GridError(f"grid too coarse: h={h} gives fewer than {min_across} "
                        "nodes across the domain")
    cx, cy = domain.center
    mx = int(np.ceil(domain.a / h)) + 2
    my = int(np.ceil(domain.b / h)) + 2
    x0, y0 = cx - mx * h, cy - my * h
    nx, ny = 2 * mx + 1, 2 * my + 1
    X = x0 + h * np.arange(nx)[None, :]
    Y = y0 + h * np.arange(ny)[:, None]
    inside = np.asarray(domain.contains(X, Y))

    full = inside.copy()
    for di, dj in OFFSETS[1:]:
        full[1:-1, 1:-1] &= inside[1 + dj:ny - 1 + dj, 1 + di:nx - 1 + di]
    full[0, :] = full[-1, :] = False
    full[:, 0] = full[:, -1] = False

    kind = np.full((ny, nx), EXTERIOR, dtype=np.int8)
    kind[inside] = BAND
    kind[full] = INTERIOR
    ids = np.full((ny, nx), -1, dtype=np.int64)
    flat = np.flatnonzero(inside)
    ids.flat[flat] = np.arange(len(flat))
    jj, ii = np.divmod(flat, nx)
    xs, ys = x0 + h * ii, y0 + h * jj

    kinds = kind.flat[flat]
    interior = np.flatnonzero(kinds == INTERIOR)
    band = np.flatnonzero(kinds == BAND)
    if len(interior) == 0:
        raise GridError("grid has no interior nodes")

    ji, ii_int = jj[interior], ii[interior]
    nbr = np.stack([ids[ji + dj, ii_int + di] for di, dj in OFFSETS], axis=1)

    nb = len(band)
    bpoint = np.empty((nb, 2))
    bnormal = np.empty((nb, 2))
    bdist = np.empty(nb)
    rows, cols, vvals, dvals = [], [], [], []
    for r, node in enumerate(band):
        px, py = xs[node], ys[node]
        bx, by, nxv, nyv, d = domain.project(px, py)
        bpoint[r] = bx, by
        bnormal[r] = nxv, nyv
        bdist[r] = d
        s = (d, d + RAY_STEPS[0] * h, d + RAY_STEPS[1] * h)
        val_w = _lagrange3(0.0, s)
        der_w = -_lagrange3_deriv(0.0, s)  # outward derivative is -d/ds
        contrib = {node: np.array([val_w[0], der_w[0]])}
        for m in (1, 2):
            qx = px - (s[m] - d) * nxv
            qy = py - (s[m] - d) * nyv
            fx, fy = (qx - x0) / h, (qy - y0) / h
            i0, j0 = int(np.floor(fx)), int(np.floor(fy))
            ci = i0 if -nxv >= 0 else i0 - 1
            cj = j0 if -nyv >= 0 else j0 - 1
            wx = _lagrange3(fx, (ci, ci + 1, ci + 2))
            wy = _lagrange3(fy, (cj, cj + 1, cj + 2))
            for a in range(3):
                for c in range(3):
                    gi, gj = ci + a, cj + c
                    if not (0 <= gi < nx and 0 <= gj < ny) or ids[gj, gi] < 0:
                        raise GridError(f"boundary closure at node {node} leaves the "
                                        "domain; refine the grid")
                    wgt = wx[a] * wy[c]
                    key = int(ids[gj, gi])
                    add = np.array([val_w[m] * wgt, der_w[m] * wgt])
                    contrib[key] = contrib.get(key, 0.0) + add
        for key in sorted(contrib):
            rows.append(r)
            cols.append(key)
            vvals.append(contrib[key][0])
            dvals.append(contrib[key][1])
    N = len(flat)
    bvalue = sp.csr_matrix((vvals, (rows, cols)), shape=(nb, N))
    bderiv = sp.csr_matrix((dvals, (rows, cols)), shape=(nb, N))

    row_of = {int(v): ("interior", r) for r, v in enumerate(interior)}
    row_of.update({int(v): ("band", r) for r, v in enumerate(band)})
    return Grid(domain=domain, h=h, x0=x0, y0=y0, kind=kind, ids=ids, x=xs, y=ys,
                interior=interior, band=band, nbr=nbr, bpoint=bpoint,
                bnormal=bnormal, bdist=bdist, bvalue=bvalue, bderiv=bderiv,
                _row_of=row_of)


def hessians(grid, u):
    """Central-difference Hessian entries (hxx, hyy, hxy) at every interior node."""
    u = np.asarray(u, dtype=float)
    U = u[grid.nbr]
    inv_h2 = 1.0 / grid.h ** 2
    hxx = (U[:, 1] - 2.0 * U[:, 0] + U[:, 2]) * inv_h2
    hyy = (U[:, 3] - 2.0 * U[:, 0] + U[:, 4]) * inv_h2
    hxy = (U[:, 5] - U[:, 6] - U[:, 7] + U[:, 8]) * (0.25 * inv_h2)
    return hxx, hyy, hxy


def hessian_matrices(grid, u):
    hxx, hyy, hxy = hessians(grid, u)
    return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


def hessian_at(grid, u, node):
    """2x2 Hessian at one interior node (given by its unknown id)."""
    role, row = grid.role(node)
    if role != "interior":
        raise GridError(f"node {node} is not interior")
    U = np.asarray(u, dtype=float)[grid.nbr[row]]
    inv_h2 = 1.0 / grid.h ** 2
    hxx = (U[1] - 2.0 * U[0] + U[2]) * inv_h2
    hyy = (U[3] - 2.0 * U[0] + U[4]) * inv_h2
    hxy = (U[5] - U[6] - U[7] + U[8]) * (0.25 * inv_h2)
    return np.array([[hxx, hxy], [hxy, hyy]])


def gradients(grid, u):
    """Central-difference gradient (ux, uy) at interior nodes."""
    U = np.asarray(u, dtype=float)[grid.nbr]
    return (U[:, 1] - U[:, 2]) / (2 * grid.h), (U[:, 3] - U[:, 4]) / (2 * grid.h)


def boundary_traces(grid, u):
    """Extrapolated boundary value and outward normal derivative per band node."""
    u = np.asarray(u, dtype=float)
    return grid.bvalue @ u, grid.bderiv @ u


def neumann_residual(grid, u, node, eps, phi, c=None):
    """Boundary residual at the closest boundary point of band node ``node``.

    With ``c is None`` this is ``u_nu - (-eps*u + phi)``; otherwise the
    limit condition ``u_nu - (c + phi)``. ``phi`` is a number or a callable
    ``phi(x, y)``.
    """
    role, row = grid.role(node)
    if role != "band":
        raise GridError(f"node {node} is not a band node")
    u = np.asarray(u, dtype=float)
    ub = float((grid.bvalue[row] @ u)[0])
    dn = float((grid.bderiv[row] @ u)[0])
    bx, by = grid.bpoint[row]
    ph = float(phi(bx, by)) if callable(phi) else float(phi)
    if c is None:
        return dn - (-eps * ub + ph)
    return dn - (c + ph)


def dump_grid(grid, stream):
    """Write node coordinates and classification as whitespace-separated text."""
    ny, nx = grid.shape
    stream.write(f"# h {grid.h!r} nx {nx} ny {ny} x0 {grid.x0!r} y0 {grid.y0!r}\n")
    stream.write("# i j x y kind [bx by nx ny dist]\n")
    band_row = {int(v): r for r, v in enumerate(grid.band)}
    for j in range(ny):
        for i in range(nx):
            k = int(grid.kind[j, i])
            line = f"{i} {j} {grid.x0 + i * grid.h!r} {grid.y0 + j * grid.h!r} {KIND_NAMES[k]}"
            node = int(grid.ids[j, i])
            if node in band_row:
                r = band_row[node]
                bx, by = grid.bpoint[r]
                nxv, nyv = grid.bnormal[r]
                line += f" {bx!r} {by!r} {nxv!r} {nyv!r} {grid.bdist[r]!r}"
            stream.write(line + "\n")


@dataclass
class DiscreteState:
    """Grid function ``u = offset + w`` with ``w`` kept at mean zero.

    Near the pure Neumann limit ``u`` is dominated by a large constant; the
    split keeps difference stencils (which only see ``w``) free of the
    cancellation that constant would cause.
    """

    grid: Grid
    w: np.ndarray
    offset: float = 0.0
    k: int = 2

    @classmethod
    def from_values(cls, grid, u, k=2):
        u = np.asarray(u, dtype=float)
        if u.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} node values, got {u.shape}")
        mean = float(u.mean())
        return cls(grid=grid, w=u - mean, offset=mean, k=k)

    @property
    def u(self):
        return self.offset + self.w

    @property
    def hessians(self):
        return hessian_matrices(self.grid, self.w)

    def admissible(self, tol=0.0):
        hxx, hyy, hxy = hessians(self.grid, self.w)
        ok = hxx + hyy > tol
        if self.k >= 2:
            ok &= hxx * hyy - hxy * hxy > tol
        return ok

    def shifted(self, du, t=1.0, const=0.0):
        """State for ``u + t*(du + const)``, re-centring ``w``."""
        du = np.asarray(du, dtype=float)
        mean = float(du.mean())
        return DiscreteState(grid=self.grid, w=self.w + t * (du - mean),
                             offset=self.offset + t * (mean + const), k=self.k)
