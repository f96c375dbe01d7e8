"""Degenerate-elliptic extension into the upper half plane and the Weiss
quantity built from it.

The trace lives on a 1-d cell grid at y = 0; the extended field solves
div(y^a grad v) = 0 on [-L, L] x (0, H] with a = 1 - 2s, zero on the far
sides and top.  Edge conductances integrate the weight exactly across each
band (horizontal edges) or invert the exact resistance integral (vertical
edges), which is what keeps the trace energy honest down to the first row:
midpoint-weight conductances misprice the singular bottom band by tens of
percent at the extreme exponents.

The Weiss quantity combines the weighted Dirichlet bulk on a half ball
(even reflection doubles it), the length of the trace support inside the
thin ball, and a weighted sphere average, with scaling powers chosen so the
exact homogeneous profile makes it constant in the radius.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

_SPHERE_NODES = 360


def equivalence_constant(n: int, s: float) -> float:
    """Ratio of the doubled extension energy to the pairwise double sum."""
    if not 0 < s < 1:
        raise ValueError("smoothness index must lie in (0, 1)")
    return 2.0 * s * math.gamma(n / 2 + s) / (math.pi ** (n / 2) * math.gamma(s))


@dataclass(frozen=True)
class ExtensionGrid:
    """Tensor grid for the upper half plane: x-nodes at cell centers of
    [-L, L], y-rows at (j + 1/2) hy up to height H."""
    hx: float
    hy: float
    L: float
    H: float

    def __post_init__(self):
        if self.hx <= 0 or self.hy <= 0:
            raise ValueError("spacings must be positive")
        for extent, step, name in ((2 * self.L, self.hx, "2L/hx"),
                                   (self.H, self.hy, "H/hy")):
            ratio = extent / step
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(f"{name} must be a positive integer")

    @property
    def nx(self) -> int:
        return int(round(2 * self.L / self.hx))

    @property
    def ny(self) -> int:
        return int(round(self.H / self.hy))

    def x_nodes(self) -> np.ndarray:
        return -self.L + (np.arange(self.nx) + 0.5) * self.hx

    def y_rows(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy


def _conductances(g: ExtensionGrid, s: float):
    """Edge conductances for the y^a-weighted Dirichlet energy."""
    a = 1.0 - 2.0 * s
    yr = g.y_rows()
    edges = np.arange(g.ny + 1) * g.hy
    band = (edges[1:] ** (1 + a) - edges[:-1] ** (1 + a)) / (1 + a)
    ch = band / g.hx
    cv = g.hx * (1 - a) / (yr[1:] ** (1 - a) - yr[:-1] ** (1 - a))
    ct = (1 - a) * (g.hy / 2) ** (a - 1) * g.hx
    ctop = g.hx * (1 - a) / (g.H ** (1 - a) - yr[-1] ** (1 - a))
    cside = band / (g.hx / 2)
    return ch, cv, ct, ctop, cside


@dataclass
class ExtensionSolution:
    grid: ExtensionGrid
    s: float
    trace: np.ndarray            # (nx,)
    values: np.ndarray           # (nx, ny)
    energy: float

    def sample(self, qx, qy):
        """Bilinear interpolation of the field at qy >= 0; below the first
        row the trace itself supplies the lower interpolation values."""
        qx = np.asarray(qx, dtype=float)
        qy = np.asarray(qy, dtype=float)
        xs = self.grid.x_nodes()
        yr = self.grid.y_rows()
        fi = (qx - xs[0]) / self.grid.hx
        i0 = np.clip(np.floor(fi).astype(int), 0, len(xs) - 2)
        wx = np.clip(fi - i0, 0.0, 1.0)
        wy0 = np.clip(qy / yr[0], 0.0, 1.0)
        v_lo = self.trace[i0] * (1 - wx) + self.trace[i0 + 1] * wx
        v_hi = self.values[i0, 0] * (1 - wx) + self.values[i0 + 1, 0] * wx
        below = v_lo * (1 - wy0) + v_hi * wy0
        fj = (qy - yr[0]) / self.grid.hy
        j0 = np.clip(np.floor(fj).astype(int), 0, len(yr) - 2)
        wyg = np.clip(fj - j0, 0.0, 1.0)
        g_lo = self.values[i0, j0] * (1 - wx) + self.values[i0 + 1, j0] * wx
        g_hi = self.values[i0, j0 + 1] * (1 - wx) + self.values[i0 + 1, j0 + 1] * wx
        general = g_lo * (1 - wyg) + g_hi * wyg
        return np.where(qy < yr[0], below, general)


def harmonic_extension(trace, g: ExtensionGrid, s: float) -> ExtensionSolution:
    """Solve the weighted Laplace problem for a given trace and report the
    Dirichlet energy of the solution over the half plane grid."""
    if not 0 < s < 1:
        raise ValueError("smoothness index must lie in (0, 1)")
    trace = np.asarray(trace, dtype=float)
    if trace.shape != (g.nx,):
        raise ValueError(f"trace must have {g.nx} cell values, got {trace.shape}")
    if trace[0] != 0 or trace[-1] != 0:
        raise ValueError("trace support must stay strictly inside the box")
    nx, ny = g.nx, g.ny
    ch, cv, ct, ctop, cside = _conductances(g, s)
    N = nx * ny

    # vertical edges (i, j) -- (i, j+1)
    pv = (np.arange(nx)[:, None] * ny + np.arange(ny - 1)[None, :]).ravel()
    qv = pv + 1
    wv = np.tile(cv, nx)
    # horizontal edges (i, j) -- (i+1, j)
    ph = (np.arange(nx - 1)[:, None] * ny + np.arange(ny)[None, :]).ravel()
    qh = ph + ny
    wh = np.tile(ch, nx - 1)

    rows = np.concatenate([pv, qv, ph, qh])
    cols = np.concatenate([qv, pv, qh, ph])
    vals = np.concatenate([-wv, -wv, -wh, -wh])
    diag = np.zeros(N)
    np.add.at(diag, pv, wv)
    np.add.at(diag, qv, wv)
    np.add.at(diag, ph, wh)
    np.add.at(diag, qh, wh)

    top = np.arange(nx) * ny + (ny - 1)
    diag[top] += ctop
    left = np.arange(ny)
    right = (nx - 1) * ny + np.arange(ny)
    diag[left] += cside
    diag[right] += cside
    bottom = np.arange(nx) * ny
    diag[bottom] += ct
    b = np.zeros(N)
    b[bottom] = ct * trace

    rows = np.concatenate([rows, np.arange(N)])
    cols = np.concatenate([cols, np.arange(N)])
    vals = np.concatenate([vals, diag])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))
    v = spsolve(A, b).reshape(nx, ny)

    energy = float(
        np.sum(ct * (v[:, 0] - trace) ** 2)
        + np.sum(cv[None, :] * (v[:, 1:] - v[:, :-1]) ** 2)
        + np.sum(ch[None, :] * (v[1:, :] - v[:-1, :]) ** 2)
        + np.sum(cside * v[0, :] ** 2) + np.sum(cside * v[-1, :] ** 2)
        + np.sum(ctop * v[:, -1] ** 2))
    return ExtensionSolution(grid=g, s=s, trace=trace, values=v, energy=energy)


def homogeneous_profile(x, y, s: float):
    """The s-homogeneous half-space model: ((rho + x) / 2)^s with
    rho = sqrt(x^2 + y^2); vanishes on the left half of the trace line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = np.hypot(x, y)
    half = np.maximum((rho + x) / 2.0, 0.0)
    return half ** s


def trace_support_intervals(trace, g: ExtensionGrid, tol: float = 0.0):
    """Maximal x-intervals covered by cells where |trace| > tol."""
    xs = g.x_nodes()
    nz = np.abs(np.asarray(trace, dtype=float)) > tol
    intervals = []
    i = 0
    while i < len(nz):
        if nz[i]:
            j = i
            while j + 1 < len(nz) and nz[j + 1]:
                j += 1
            intervals.append((xs[i] - g.hx / 2, xs[j] + g.hx / 2))
            i = j + 1
        else:
            i += 1
    return intervals


@dataclass
class WeissCurve:
    center: float
    s: float
    radii: np.ndarray
    values: np.ndarray
    bulk: np.ndarray             # doubled (full-ball) Dirichlet part
    thin: np.ndarray             # trace support length inside the thin ball
    sphere: np.ndarray           # doubled weighted boundary average

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("radius,value,bulk,thin,sphere\n")
            for row in zip(self.radii, self.values, self.bulk,
                           self.thin, self.sphere):
                f.write(",".join(repr(float(v)) for v in row) + "\n")


def monotonicity_report(curve: WeissCurve) -> dict:
    """Drift record for the radius dependence; nothing is asserted here.

    The fitted constant scales any negative increment against the drift
    budget (r^(2s-1) + 1) dr, so a perfectly monotone curve reports 0 and
    larger values flag instances whose dips outrun that allowance.
    """
    inc = curve.increments()
    if inc.size:
        neg = np.maximum(-inc, 0.0)
        budget = (curve.radii[:-1] ** (2 * curve.s - 1) + 1.0) * np.diff(curve.radii)
        fitted = float(np.max(neg / budget))
    else:
        fitted = 0.0
    return {
        "increments": inc.tolist(),
        "min_increment": float(inc.min()) if inc.size else 0.0,
        "monotone": bool(np.all(inc >= 0)) if inc.size else True,
        "fitted_negativity_constant": fitted,
    }


def weiss_functional(sol: ExtensionSolution, center: float, radii,
                     support_intervals=None, nsub: int = 4) -> WeissCurve:
    """Evaluate the scaled energy-minus-boundary quantity at each radius.

    Bulk gradients use per-cell corner interpolation with nsub x nsub
    subpoints and the exact weight at each subpoint; the bottom strip
    between the trace line and the first row gets its own boundary-layer
    quadrature, since the field there varies like y^(1-a) and a naive
    difference quotient misses the weight concentration.  The sphere term
    walks midpoint polar nodes on the upper half circle and doubles.
    """
    g = sol.grid
    s = sol.s
    a = 1.0 - 2.0 * s
    vals, trace = sol.values, sol.trace
    if support_intervals is None:
        support_intervals = trace_support_intervals(trace, g)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or float(radii.max()) >= min(g.L, g.H) / 2:
        raise ValueError("radii must lie in (0, min(L, H)/2)")
    rmax = float(radii.max())
    if center - rmax < -g.L or center + rmax > g.L:
        raise ValueError("ball of largest radius leaves the grid")

    xs = g.x_nodes()
    yr = g.y_rows()
    y0 = g.hy / 2
    hx, hy = g.hx, g.hy

    I = np.where(np.abs(xs - center) <= rmax + 2 * hx)[0]
    I = I[I + 1 < g.nx]
    J = np.arange(g.ny - 1)
    J = J[yr[J] <= rmax + 2 * hy]
    t = (np.arange(nsub) + 0.5) / nsub
    XI, ETA = np.meshgrid(t, t, indexing="ij")

    ii, jj = np.meshgrid(I, J, indexing="ij")
    v00 = vals[ii, jj]
    v10 = vals[ii + 1, jj]
    v01 = vals[ii, jj + 1]
    v11 = vals[ii + 1, jj + 1]
    px = xs[ii][..., None, None] + XI[None, None] * hx
    py = yr[jj][..., None, None] + ETA[None, None] * hy
    ux = ((v10 - v00)[..., None, None] * (1 - ETA)[None, None]
          + (v11 - v01)[..., None, None] * ETA[None, None]) / hx
    uy = ((v01 - v00)[..., None, None] * (1 - XI)[None, None]
          + (v11 - v10)[..., None, None] * XI[None, None]) / hy
    dens_int = py ** a * (ux ** 2 + uy ** 2)
    r2_int = (px - center) ** 2 + py ** 2
    area_sub = hx * hy / nsub ** 2

    Is = I
    tr0, tr1 = trace[Is], trace[Is + 1]
    w0, w1 = vals[Is, 0], vals[Is + 1, 0]
    sx = xs[Is][:, None] + t[None, :] * hx
    du = (w0[:, None] * (1 - t)[None, :] + w1[:, None] * t[None, :]
          - tr0[:, None] * (1 - t)[None, :] - tr1[:, None] * t[None, :])
    dtr = (tr1 - tr0) / hx
    drow = (w1 - w0) / hx
    wsub = hx / nsub
    tysub = (np.arange(nsub) + 0.5) / nsub

    out_w, out_bulk, out_thin, out_sph = [], [], [], []
    for r in radii:
        inside = r2_int <= r * r
        bulk = float(np.sum(dens_int[inside]) * area_sub)

        ycut = np.sqrt(np.maximum(r * r - (sx - center) ** 2, 0.0))
        cut = np.minimum(ycut, y0)
        hit = cut > 0
        uy_term = float(np.sum((1 - a) * cut ** (1 - a) / y0 ** (2 - 2 * a)
                               * du ** 2 * wsub * hit))
        ysub = cut[..., None] * tysub[None, None, :]
        ysub_safe = np.where(ysub > 0, ysub, 1.0)
        eta = ysub / y0
        uxs = dtr[:, None, None] * (1 - eta) + drow[:, None, None] * eta
        ux_term = float(np.sum(ysub_safe ** a * uxs ** 2
                               * (cut[..., None] / nsub) * wsub
                               * hit[..., None]))
        bulk_total = 2.0 * (bulk + uy_term + ux_term)

        thin = 0.0
        for lo, hi in support_intervals:
            thin += max(0.0, min(hi, center + r) - max(lo, center - r))

        th = (np.arange(_SPHERE_NODES) + 0.5) / _SPHERE_NODES * math.pi
        qx = center + r * np.cos(th)
        qy = r * np.sin(th)
        u_q = sol.sample(qx, qy)
        sph = float(2.0 * np.sum(qy ** a * u_q ** 2) * (math.pi * r / _SPHERE_NODES))

        out_bulk.append(bulk_total)
        out_thin.append(thin)
        out_sph.append(sph)
        out_w.append((bulk_total + thin) / r - s * sph / r ** 2)
    return WeissCurve(center=center, s=s, radii=radii,
                      values=np.array(out_w), bulk=np.array(out_bulk),
                      thin=np.array(out_thin), sphere=np.array(out_sph))
