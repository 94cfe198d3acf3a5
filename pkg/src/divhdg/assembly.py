"""Batched assembly of the parameter-dependent saddle-point system.

Velocity form (per element K, with D = symmetric gradient, jumps measured
against the tangential trace unknowns, P the L2 projection onto the
degree-(k-1) tangential facet space, h_F the facet length):

    a(u, v) = tau (u, v)_K + 2 mu [ (D u, D v)_K
              - <D(u) n, tang(v - vhat)>_dK - <D(v) n, tang(u - uhat)>_dK
              + (alpha k^2 / h_F) <P tang(u - uhat), P tang(v - vhat)>_dK ]
    b(p, v) = -(p, div v)_K,      c(p, q) = -(1/lambda) (p, q)_K

The contravariant velocity map makes b exactly integer-structured: the
constant-pressure row couples only to the lowest-order flux unknowns (+-1
entries) and the mean-zero pressure rows only to the matching divergence
carriers (-identity). The assembled element blocks split into

    A_loc = tau * MASS + 2 mu * (VISC + alpha k^2 * PEN)

with parameter-independent stacks, so parameter sweeps reuse one integration
pass. Essential trace data is eliminated by slicing; the eliminated columns
move to the right-hand side.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import NotSPD, SparseSym
from .mesh import Mesh
from .spaces import EssentialData, Spaces

_CHUNK = 2048


@dataclass(frozen=True)
class ProblemParams:
    mu: float = 1.0
    tau: float = 0.0
    inv_lambda: float = 0.0  # reciprocal of the compressibility parameter; 0 = limit
    alpha: float = 8.0

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if self.tau < 0.0 or self.inv_lambda < 0.0 or self.alpha <= 0.0:
            raise ValueError("tau, inv_lambda must be >= 0 and alpha > 0")


@dataclass(frozen=True)
class LocalStacks:
    """Parameter-independent element matrices (signed, local slot order)."""

    mass: np.ndarray  # (nt, n_loc, n_loc)
    visc: np.ndarray  # gradient + consistency terms
    pen: np.ndarray  # jump penalty with 1/h_F included, alpha k^2 excluded

    def combine(self, p: ProblemParams, k: int) -> np.ndarray:
        return p.tau * self.mass + (2.0 * p.mu) * (
            self.visc + (p.alpha * k * k) * self.pen
        )


def assemble_local_stacks(mesh: Mesh, spaces: Spaces) -> LocalStacks:
    ref = spaces.ref
    dm = spaces.dofmap
    k = spaces.k
    nt = mesh.num_triangles
    n_loc = dm.n_loc
    n_u = ref.n_u

    mass = np.zeros((nt, n_loc, n_loc))
    visc = np.zeros((nt, n_loc, n_loc))
    pen = np.zeros((nt, n_loc, n_loc))

    j_all = mesh.jacobians
    det_all = mesh.det_j
    jinv_all = np.empty_like(j_all)
    jinv_all[:, 0, 0] = j_all[:, 1, 1]
    jinv_all[:, 0, 1] = -j_all[:, 0, 1]
    jinv_all[:, 1, 0] = -j_all[:, 1, 0]
    jinv_all[:, 1, 1] = j_all[:, 0, 0]
    jinv_all /= det_all[:, None, None]

    w = ref.vol_rule.weights
    for start in range(0, nt, _CHUNK):
        sel = slice(start, min(start + _CHUNK, nt))
        j = j_all[sel]
        det = det_all[sel]
        jinv = jinv_all[sel]
        jv = np.einsum("edc,iqc->eiqd", j, ref.vol_vals)
        mass[sel, :n_u, :n_u] = np.einsum(
            "eiqd,ejqd,q->eij", jv, jv, w
        ) / det[:, None, None]
        gp = np.einsum("eab,iqbc,ecd->eiqad", j, ref.vol_grads, jinv)
        gp /= det[:, None, None, None, None]
        dsym = 0.5 * (gp + np.swapaxes(gp, 3, 4))
        visc[sel, :n_u, :n_u] = np.einsum(
            "eiqad,ejqad,q->eij", dsym, dsym, w
        ) * det[:, None, None]

    we = ref.facet.rule.weights
    lh = ref.facet.lhat_vals  # (k, Qe)
    for l in range(3):
        e = mesh.tri_edges[:, l]
        tvec_all = mesh.tangents[e]
        len_all = mesh.edge_lengths[e]
        hat0 = n_u + l * k
        for flipv in (0, 1):
            gsel = np.flatnonzero(mesh.tri_edge_flip[:, l] == bool(flipv))
            if gsel.size == 0:
                continue
            vals = ref.edge_vals[(l, flipv)]
            grads = ref.edge_grads[(l, flipv)]
            j = j_all[gsel]
            det = det_all[gsel]
            jinv = jinv_all[gsel]
            tvec = tvec_all[gsel]
            nout = np.column_stack([tvec[:, 1], -tvec[:, 0]])
            if flipv:
                nout = -nout
            le = len_all[gsel]

            pv = np.einsum("gdc,iqc->giqd", j, vals) / det[:, None, None, None]
            tt = np.einsum("giqd,gd->giq", pv, tvec)
            gp = np.einsum("gab,iqbc,gcd->giqad", j, grads, jinv)
            gp /= det[:, None, None, None, None]
            dsym = 0.5 * (gp + np.swapaxes(gp, 3, 4))
            dn = np.einsum("giqad,gd,ga->giq", dsym, nout, tvec)

            e_uu = np.einsum("giq,gjq,q->gij", dn, tt, we) * le[:, None, None]
            e_uh = -np.einsum("giq,mq,q->gim", dn, lh, we) * le[:, None, None]
            ix = np.ix_(gsel, np.arange(n_u), np.arange(n_u))
            visc[ix] -= e_uu + np.swapaxes(e_uu, 1, 2)
            ixh = np.ix_(gsel, np.arange(n_u), np.arange(hat0, hat0 + k))
            visc[ixh] -= e_uh
            visc[np.ix_(gsel, np.arange(hat0, hat0 + k), np.arange(n_u))] -= (
                np.swapaxes(e_uh, 1, 2)
            )

            bmom = np.einsum("giq,jq,q->gij", tt, lh, we)
            pen[ix] += np.einsum("gij,gmj->gim", bmom, bmom)
            pen[ixh] += -bmom
            pen[np.ix_(gsel, np.arange(hat0, hat0 + k), np.arange(n_u))] += (
                -np.swapaxes(bmom, 1, 2)
            )
            pen[np.ix_(gsel, np.arange(hat0, hat0 + k), np.arange(hat0, hat0 + k))] += (
                np.eye(k)
            )

    souter = dm.signs[:, :, None] * dm.signs[:, None, :]
    mass *= souter
    visc *= souter
    pen *= souter
    return LocalStacks(mass=mass, visc=visc, pen=pen)


def facet_projection(facet) -> np.ndarray:
    """Matrix applying the facet-space L2 projection to point values at the
    facet quadrature rule: projected values = P @ values. Idempotent, and
    reproduces any trace already spanned by the facet modes exactly."""
    lh = facet.lhat_vals
    return lh.T @ (lh * facet.rule.weights)


def assemble_pressure_ops(mesh: Mesh, spaces: Spaces) -> sp.csr_matrix:
    """The divergence-coupling matrix over all pressure x all velocity
    unknowns. Exactly integer-structured; parameter independent."""
    dm = spaces.dofmap
    ref = spaces.ref
    split = spaces.split
    k = spaces.k
    nt = mesh.num_triangles
    rows, cols, vals = [], [], []
    for l in range(3):
        base = l * (k + 1)
        rows.append(np.arange(nt))
        cols.append(dm.vel_loc[:, base])
        vals.append(-dm.signs[:, base])
    n_d = ref.n_int_d
    for r in range(n_d):
        rows.append(nt + np.arange(nt) * n_d + r)
        cols.append(dm.vel_loc[:, ref.n_facet + ref.n_int_c + r])
        vals.append(-np.ones(nt))
    b = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(split.n_pressure, split.n_vel),
    ).tocsr()
    b.sum_duplicates()
    b.sort_indices()
    return b


def pressure_c_diagonal(mesh: Mesh, spaces: Spaces, params: ProblemParams) -> np.ndarray:
    n_d = spaces.ref.n_int_d
    return -params.inv_lambda * np.concatenate(
        [mesh.areas, np.repeat(mesh.det_j, n_d)]
    )


@dataclass
class BlockSystem:
    """Assembled saddle-point system with essential data eliminated.

    A, B, C, F_u, F_p are the reduced blocks (A over free velocity unknowns).
    The unreduced matrices and the signed element stacks are retained for
    static condensation and verification.
    """

    A: SparseSym
    B: sp.csr_matrix
    C: SparseSym
    F_u: np.ndarray
    F_p: np.ndarray
    a_full: sp.csr_matrix = field(repr=False)
    b_full: sp.csr_matrix = field(repr=False)
    aloc: np.ndarray = field(repr=False)
    floc: np.ndarray = field(repr=False)
    spaces: Spaces = field(repr=False)
    params: ProblemParams = None
    essential: EssentialData = field(repr=False, default=None)

    @property
    def mesh(self) -> Mesh:
        return self.spaces.mesh

    @property
    def n_free(self) -> int:
        return self.A.n

    @property
    def n_pressure(self) -> int:
        return self.C.n


def _element_coercivity_check(aloc: np.ndarray):
    scale = np.maximum(np.abs(aloc).max(axis=(1, 2)), 1e-300)
    evs = np.linalg.eigvalsh(aloc)
    worst = np.min(evs[:, 0] / scale)
    if worst < -1e-9:
        raise NotSPD(
            "element velocity block has a negative eigenvalue "
            f"(relative {worst:.3e}); increase the penalty parameter alpha"
        )


def assemble_saddle(
    mesh: Mesh,
    spaces: Spaces,
    params: ProblemParams,
    essential: EssentialData,
    body_force=None,
    volume_quad_degree: int = None,
    stacks: LocalStacks = None,
) -> BlockSystem:
    if stacks is None:
        stacks = assemble_local_stacks(mesh, spaces)
    dm = spaces.dofmap
    split = spaces.split
    aloc = stacks.combine(params, spaces.k)
    _element_coercivity_check(aloc)

    floc = np.zeros((mesh.num_triangles, dm.n_loc))
    if body_force is not None:
        deg = volume_quad_degree or spaces.ref.vol_rule.degree
        rule, vals, _, _, _ = spaces.ref.volume_tables(deg)
        a0 = mesh.vertices[mesh.triangles[:, 0]]
        nt = mesh.num_triangles
        for start in range(0, nt, _CHUNK):
            sel = slice(start, min(start + _CHUNK, nt))
            pts = a0[sel, None, :] + np.einsum(
                "edc,qc->eqd", mesh.jacobians[sel], rule.points
            )
            fv = body_force(pts.reshape(-1, 2)).reshape(pts.shape)
            jv = np.einsum("edc,iqc->eiqd", mesh.jacobians[sel], vals)
            floc[sel, : spaces.ref.n_u] = np.einsum(
                "eiqd,eqd,q->ei", jv, fv, rule.weights
            )
        floc *= dm.signs

    n_vel = split.n_vel
    r = np.broadcast_to(dm.vel_loc[:, :, None], aloc.shape)
    c = np.broadcast_to(dm.vel_loc[:, None, :], aloc.shape)
    a_full = sp.coo_matrix(
        (aloc.ravel(), (r.ravel(), c.ravel())), shape=(n_vel, n_vel)
    ).tocsr()
    a_full.sum_duplicates()
    a_full.sort_indices()

    f_full = np.zeros(n_vel)
    np.add.at(f_full, dm.vel_loc.ravel(), floc.ravel())

    b_full = assemble_pressure_ops(mesh, spaces)
    cdiag = pressure_c_diagonal(mesh, spaces, params)

    free = essential.free_ids
    g = essential.full_vector(n_vel)
    a_red = a_full[free][:, free]
    f_u = f_full[free] - a_full[free] @ g
    b_red = b_full[:, free]
    f_p = -(b_full @ g)

    return BlockSystem(
        A=SparseSym(a_red),
        B=b_red,
        C=SparseSym(sp.diags(cdiag).tocsr()),
        F_u=f_u,
        F_p=f_p,
        a_full=a_full,
        b_full=b_full,
        aloc=aloc,
        floc=floc,
        spaces=spaces,
        params=params,
        essential=essential,
    )


def assemble_aux(
    mesh: Mesh, spaces: Spaces, params: ProblemParams, essential: EssentialData
):
    """Continuous piecewise-linear vector auxiliary operator on free vertices.

    Returns (matrix, free_vertices): kron of the scalar stiffness/mass
    combination 2 mu * stiffness + tau * consistent mass with the 2x2
    identity, restricted to vertices not on the essentially imposed boundary.
    """
    nv = mesh.num_vertices
    tris = mesh.triangles
    nt = mesh.num_triangles

    # P1 gradients: grad lam_i constant per element
    v = mesh.vertices[tris]  # (nt, 3, 2)
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    det = mesh.det_j
    grads = np.empty((nt, 3, 2))
    grads[:, 1, 0] = e2[:, 1]
    grads[:, 1, 1] = -e2[:, 0]
    grads[:, 2, 0] = -e1[:, 1]
    grads[:, 2, 1] = e1[:, 0]
    grads[:, 1:] /= det[:, None, None]
    grads[:, 0] = -(grads[:, 1] + grads[:, 2])

    stiff = np.einsum("tid,tjd->tij", grads, grads) * (0.5 * det)[:, None, None]
    mloc = (np.ones((3, 3)) + np.eye(3)) / 24.0
    massl = mloc[None, :, :] * det[:, None, None]
    loc = 2.0 * params.mu * stiff + params.tau * massl

    r = np.broadcast_to(tris[:, :, None], loc.shape)
    c = np.broadcast_to(tris[:, None, :], loc.shape)
    scal = sp.coo_matrix(
        (loc.ravel(), (r.ravel(), c.ravel())), shape=(nv, nv)
    ).tocsr()

    ess_verts = np.zeros(nv, bool)
    for e in mesh.boundary_edges():
        if essential.free_mask[e * (spaces.k + 1)]:
            continue  # outlet edge: vertices stay free unless shared with walls
        ess_verts[mesh.edges[e]] = True
    free_v = np.flatnonzero(~ess_verts)

    scal = scal[free_v][:, free_v]
    a0 = sp.kron(scal, sp.eye(2), format="csr")
    a0.sum_duplicates()
    a0.sort_indices()
    return SparseSym(a0), free_v
