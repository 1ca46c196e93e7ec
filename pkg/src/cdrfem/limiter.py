"""Edgewise flux limiting: convex bar-state limiting and its balanced variant.

The plain limiter clips the target flux of every edge so that the limited
bar states stay inside the local solution bounds.  The balanced variant
first redistributes the nodal net source over the edges through balancing
fluxes, limits those with a symmetric one-sided factor, and then clips the
resulting fluxes against bounds built from the shifted bar states.  All
per-edge quantities live on the directed edge table of the mesh; functions
accept scalars or aligned arrays.

Division by the artificial diffusion is safe everywhere (it has a positive
floor), and the limited fluxes are assembled from products of the form
2*d_ij*(...) exactly as written, so antisymmetry holds to the last bit.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import mirror_cell


def bar_state(u_i, u_j, conv_ij, d_ij):
    """Low-order edge average shifted against the convective difference."""
    return 0.5 * (u_i + u_j) - conv_ij * (u_j - u_i) / (2.0 * d_ij)


def mc_target_flux(u_i, u_j, d_ij, reac_ij):
    """Raw antidiffusive flux (d_ij + a_ij^R)(u_i - u_j)."""
    return (d_ij + reac_ij) * (u_i - u_j)


def mc_limit(f, d_ij, ubar_ij, ubar_ji, umin_i, umax_i, umin_j, umax_j):
    """Clip a target flux so both limited bar states stay in local bounds."""
    two_d = 2.0 * d_ij
    pos = np.minimum(f, np.minimum(two_d * (umax_i - ubar_ij),
                                   two_d * (ubar_ji - umin_j)))
    neg = np.maximum(f, np.maximum(two_d * (umin_i - ubar_ij),
                                   two_d * (ubar_ji - umax_j)))
    return np.where(f > 0.0, pos, np.where(f < 0.0, neg, 0.0))


def net_source(problem, x, y, u):
    """Nodal net production f(x) - c(x) u."""
    return problem.source(x, y) - problem.reaction(x, y) * u


def balancing_flux(s_i, s_j, x_i, x_j, v_i, v_j):
    """Edge share of the net source, aligned with the velocity average.

    The last axis of ``x_i``, ``x_j``, ``v_i``, ``v_j`` holds the two space
    components.  Fails when the velocity vanishes at both endpoints.
    """
    x_i, x_j = np.asarray(x_i, dtype=float), np.asarray(x_j, dtype=float)
    v_i, v_j = np.asarray(v_i, dtype=float), np.asarray(v_j, dtype=float)
    m2 = np.maximum((v_i ** 2).sum(axis=-1), (v_j ** 2).sum(axis=-1))
    if np.any(m2 <= 0.0):
        raise ValueError("velocity vanishes at both edge endpoints; "
                         "balancing flux undefined")
    proj = ((x_i - x_j) * (v_i + v_j)).sum(axis=-1)
    return 0.5 * (0.5 * (s_i + s_j)) * proj / (2.0 * m2)


def fictitious_value(mesh, u, i, j):
    """u_h extended to the reflected point 2*x_i - x_j via the mirror cell."""
    mp = mirror_cell(mesh, i, j)
    tri = mesh.cells[mp.cell]
    dx = mesh.vertices[i] - mesh.vertices[j]
    return float(u[i] + u[tri] @ (mesh.cell_grads[mp.cell] @ dx))


def _r_abs_p(P, Qp, Qm, b, free):
    # one-sided limited magnitude R|P| without forming the ratio R
    sgn = np.sign(P)
    case_neg = (b < 0.0) | ((b == 0.0) & (P >= 0.0))
    rp = np.where(case_neg, sgn * np.minimum(P, Qp), sgn * np.maximum(P, Qm))
    return np.where(free, rp, np.abs(P))


def limit_balancing(P_ij, P_ji, Qp_ij, Qm_ij, Qp_ji, Qm_ji, b_i, b_j,
                    i_free=True, j_free=True):
    """Symmetrized limited balancing flux alpha_ij * P_ij.

    Combines the one-sided limited magnitudes of both orientations; rows of
    Dirichlet nodes pass their side through unlimited.  The Q bounds encode
    the variant: with the fictitious-value term for the full limiter,
    without it for the simplified one.
    """
    rp_i = _r_abs_p(P_ij, Qp_ij, Qm_ij, b_i, i_free)
    rp_j = _r_abs_p(P_ji, Qp_ji, Qm_ji, b_j, j_free)
    return np.sign(P_ij) * np.minimum(rp_i, rp_j)


def limiting_factor(P, Qp, Qm, b, free):
    """Correction factor R in [0, 1]; the flux route never divides by P."""
    P = np.asarray(P, dtype=float)
    one = np.ones_like(P)
    # roundoff can push Q past zero by one ulp, so guard the ratio and clip
    case_hi = free & (b <= 0.0) & (P > Qp) & (P != 0.0)
    case_lo = free & (b >= 0.0) & (P < Qm) & (P != 0.0)
    r = np.where(case_hi, Qp / np.where(case_hi, P, 1.0), one)
    r = np.where(case_lo, Qm / np.where(case_lo, P, 1.0), r)
    return np.clip(r, 0.0, 1.0)


def wb_bar_state(ubar, alphaP, b_i, art_row_i):
    """Bar state shifted by the limited balancing flux and the source share."""
    return ubar + alphaP + b_i / art_row_i


def wb_target_flux(u_i, u_j, d_ij, reac_ij, alphaP):
    """Antidiffusive flux of the balanced scheme."""
    return 2.0 * d_ij * (0.5 * (u_i - u_j) - alphaP) + reac_ij * (u_i - u_j)


def wb_limit(fs, d_ij, ubar_s_ij, ubar_s_ji, bmin_i, bmax_i, bmin_j, bmax_j,
             j_dirichlet):
    """Clip the balanced flux against the shifted bar-state bounds.

    Edges into Dirichlet nodes have no opposite-side bar state, so only the
    owner-side constraint applies there.
    """
    two_d = 2.0 * d_ij
    hi_own = two_d * (bmax_i - ubar_s_ij)
    lo_own = two_d * (bmin_i - ubar_s_ij)
    hi_opp = two_d * (ubar_s_ji - bmin_j)
    lo_opp = two_d * (ubar_s_ji - bmax_j)
    pos = np.where(j_dirichlet, np.minimum(fs, hi_own),
                   np.minimum(fs, np.minimum(hi_own, hi_opp)))
    neg = np.where(j_dirichlet, np.maximum(fs, lo_own),
                   np.maximum(fs, np.maximum(lo_own, lo_opp)))
    return np.where(fs > 0.0, pos, np.where(fs < 0.0, neg, 0.0))


@dataclass
class EdgeState:
    """All per-sweep edge quantities of one limiter evaluation.

    Per-edge arrays follow the directed edge table; per-node arrays are
    marked as such.  ``wflux`` is the product 2*d_ij*(limited bar state)
    that drives the row residuals, ``rhs`` the per-node right-hand side
    that remains after the limiter absorbed its share of the source.
    """

    limiter: str
    ei: np.ndarray
    ej: np.ndarray
    ubar: np.ndarray
    wflux: np.ndarray
    rhs: np.ndarray
    variant: Optional[str] = None
    ftarget: Optional[np.ndarray] = None
    fstar: Optional[np.ndarray] = None
    ubar_star: Optional[np.ndarray] = None
    umin: Optional[np.ndarray] = None          # per node
    umax: Optional[np.ndarray] = None          # per node
    s: Optional[np.ndarray] = None             # per node
    P: Optional[np.ndarray] = None
    fict_incr: Optional[np.ndarray] = None
    Qp: Optional[np.ndarray] = None
    Qm: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    alphaP: Optional[np.ndarray] = None
    ubar_s: Optional[np.ndarray] = None
    fs: Optional[np.ndarray] = None
    fs_star: Optional[np.ndarray] = None
    ubar_s_star: Optional[np.ndarray] = None
    bar_min: Optional[np.ndarray] = None       # per node
    bar_max: Optional[np.ndarray] = None       # per node


class LimiterContext:
    """Per-solve cache of edge geometry and nodal coefficient samples."""

    def __init__(self, mesh, ops, problem):
        self.mesh = mesh
        self.ops = ops
        self.problem = problem
        self.et = mesh.edges
        self.free_row = self.et.i < mesh.num_free
        self.j_dirichlet = self.et.j >= mesh.num_free
        self.b_over_ac = ops.b / ops.art_row

    @cached_property
    def f_node(self):
        x = self.mesh.vertices
        return np.asarray(self.problem.source(x[:, 0], x[:, 1]), dtype=float)

    @cached_property
    def c_node(self):
        x = self.mesh.vertices
        return np.asarray(self.problem.reaction(x[:, 0], x[:, 1]), dtype=float)

    @cached_property
    def geom_e(self):
        """Velocity projection factor of the balancing flux, per edge."""
        x = self.mesh.vertices
        vx, vy = self.problem.velocity(x[:, 0], x[:, 1])
        vx, vy = np.asarray(vx, dtype=float), np.asarray(vy, dtype=float)
        spd2 = vx ** 2 + vy ** 2
        i, j = self.et.i, self.et.j
        m2 = np.maximum(spd2[i], spd2[j])
        if np.any(m2 <= 0.0):
            raise ValueError("velocity vanishes at both endpoints of a mesh "
                             "edge; balancing flux undefined")
        proj = ((x[i, 0] - x[j, 0]) * (vx[i] + vx[j])
                + (x[i, 1] - x[j, 1]) * (vy[i] + vy[j]))
        return proj / (2.0 * m2)

    @cached_property
    def grad_incr(self):
        """Sparse map u -> (u^i_j - u_i) of mirror-cell gradient increments."""
        mesh = self.mesh
        kcell = mesh.mirror_cells
        tri = mesh.cells[kcell]
        dx = mesh.vertices[self.et.i] - mesh.vertices[self.et.j]
        vals = np.einsum("ekd,ed->ek", mesh.cell_grads[kcell], dx)
        indptr = np.arange(len(kcell) + 1) * 3
        return sp.csr_matrix((vals.ravel(), tri.ravel(), indptr),
                             shape=(len(kcell), mesh.num_vertices))


def edge_state(ctx, u, limiter="wmc", variant="full", alpha_override=None,
               limit_fluxes=True):
    """Evaluate one limiter sweep at the iterate u.

    ``alpha_override`` and ``limit_fluxes`` disable parts of the balanced
    limiter; they exist for identity checks, not for production runs.
    """
    ops, et = ctx.ops, ctx.et
    ui, uj = u[et.i], u[et.j]
    d, conv, reac = ops.d_e, ops.conv_e, ops.reac_e
    ubar = bar_state(ui, uj, conv, d)

    if limiter == "galerkin":
        f = mc_target_flux(ui, uj, d, reac)
        return EdgeState(limiter=limiter, ei=et.i, ej=et.j, ubar=ubar,
                         ftarget=f, wflux=2.0 * d * ubar + f, rhs=ops.b)

    if limiter == "mc":
        f = mc_target_flux(ui, uj, d, reac)
        umin = np.minimum(np.minimum.reduceat(uj, et.indptr[:-1]), u)
        umax = np.maximum(np.maximum.reduceat(uj, et.indptr[:-1]), u)
        if limit_fluxes:
            fstar = mc_limit(f, d, ubar, ubar[et.rev], umin[et.i], umax[et.i],
                             umin[et.j], umax[et.j])
        else:
            fstar = f
        return EdgeState(limiter=limiter, ei=et.i, ej=et.j, ubar=ubar,
                         ftarget=f, fstar=fstar,
                         ubar_star=ubar + fstar / (2.0 * d),
                         umin=umin, umax=umax,
                         wflux=2.0 * d * ubar + fstar, rhs=ops.b)

    if limiter != "wmc":
        raise ValueError(f"unknown limiter {limiter!r}")

    s = ctx.f_node - ctx.c_node * u
    P = 0.25 * (s[et.i] + s[et.j]) * ctx.geom_e
    bac_i = ctx.b_over_ac[et.i]
    cand_hi = np.maximum(ui, uj) - ubar - bac_i
    cand_lo = np.minimum(ui, uj) - ubar - bac_i
    if variant == "full":
        fict = ctx.grad_incr @ u
        Qp = np.maximum(0.5 * fict, cand_hi)
        Qm = np.minimum(0.5 * fict, cand_lo)
    elif variant == "simplified":
        fict = None
        Qp, Qm = cand_hi, cand_lo
    else:
        raise ValueError(f"unknown variant {variant!r}")

    b_e = ops.b[et.i]
    if alpha_override is None:
        rp = _r_abs_p(P, Qp, Qm, b_e, ctx.free_row)
        alphaP = np.sign(P) * np.minimum(rp, rp[et.rev])
        R = limiting_factor(P, Qp, Qm, b_e, ctx.free_row)
        alpha = np.minimum(R, R[et.rev])
    else:
        alpha = np.full(len(P), float(alpha_override))
        R = alpha
        alphaP = alpha * P

    ubar_s = ubar + alphaP + bac_i
    fs = wb_target_flux(ui, uj, d, reac, alphaP)
    bar_min = np.minimum.reduceat(ubar_s, et.indptr[:-1])
    bar_max = np.maximum.reduceat(ubar_s, et.indptr[:-1])
    if limit_fluxes:
        fs_star = wb_limit(fs, d, ubar_s, ubar_s[et.rev], bar_min[et.i],
                           bar_max[et.i], bar_min[et.j], bar_max[et.j],
                           ctx.j_dirichlet)
    else:
        fs_star = fs
    # rows of Dirichlet nodes carry no fluxes in the final system
    fs_star = np.where(ctx.free_row, fs_star, 0.0)

    return EdgeState(limiter=limiter, variant=variant, ei=et.i, ej=et.j,
                     ubar=ubar, s=s, P=P, fict_incr=fict, Qp=Qp, Qm=Qm,
                     R=R, alpha=alpha, alphaP=alphaP, ubar_s=ubar_s, fs=fs,
                     fs_star=fs_star,
                     ubar_s_star=ubar_s + fs_star / (2.0 * d),
                     bar_min=bar_min, bar_max=bar_max,
                     wflux=2.0 * d * ubar_s + fs_star,
                     rhs=np.zeros(len(ctx.b_over_ac)))


def write_edge_state(state, path):
    """Debug CSV of the balanced limiter, one line per undirected edge."""
    if state.P is None:
        raise ValueError("edge-state dump requires the balanced limiter")
    keep = state.ei < state.ej
    with open(path, "w") as out:
        out.write("i,j,ubar,P,alphaP,fs,fs_star\n")
        for k in np.flatnonzero(keep):
            out.write(f"{state.ei[k]},{state.ej[k]},{state.ubar[k]:.17g},"
                      f"{state.P[k]:.17g},{state.alphaP[k]:.17g},"
                      f"{state.fs[k]:.17g},{state.fs_star[k]:.17g}\n")
