"""Static condensation of element-interior velocity and mean-zero pressure.

Per element the interior velocity block and the mean-zero pressure block form
a local saddle system

    K_LL = [[A_II, B_I^T], [B_I, -(1/lambda) det(J) I]],   B_I = -[0 | I],

coupled to the element's trace unknowns G = (facet-normal, tangential) only
through A (the constant-pressure unknown couples to no interior unknown, so
its rows survive condensation unchanged). Eliminating L element-by-element
yields the condensed SPD block A_g over trace unknowns plus the unchanged
constant-pressure coupling B_g and mass C_g. The elimination stays well posed
in the incompressibility limit 1/lambda = 0 because B_I has full row rank.

For finite lambda the same elimination equals adding lambda-weighted
divergence penalization to the interior block before inverting; both routes
are exposed to the verification suite.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import BlockSystem
from .linalg import SparseSym
from .spaces import Spaces


@dataclass
class CondensedSystem:
    """Trace-unknown saddle system and the data to recover interiors."""

    A_g: SparseSym  # free condensed velocity block
    B_g: sp.csr_matrix  # constant-pressure coupling, free columns
    C_g: SparseSym  # constant-pressure mass, -(1/lambda) diag(areas)
    F_g: np.ndarray
    F_pbar: np.ndarray
    free_cond: np.ndarray  # free condensed unknown ids (global velocity ids)
    a_g_full: sp.csr_matrix = field(repr=False)
    b_g_full: sp.csr_matrix = field(repr=False)
    back_x: np.ndarray = field(repr=False)  # (nt, n_L, n_G) K_LL^-1 K_LG
    back_y: np.ndarray = field(repr=False)  # (nt, n_L) K_LL^-1 F_L
    g_slots: np.ndarray = field(repr=False)  # (nt, n_G) global ids of trace slots
    spaces: Spaces = field(repr=False, default=None)
    block: BlockSystem = field(repr=False, default=None)

    @property
    def n_free(self) -> int:
        return self.A_g.n

    @property
    def n_pbar(self) -> int:
        return self.C_g.n


def eliminate_local(block: BlockSystem) -> CondensedSystem:
    spaces = block.spaces
    ref = spaces.ref
    dm = spaces.dofmap
    mesh = block.mesh
    split = spaces.split
    nt = mesh.num_triangles
    n_int = dm.n_loc_int
    n_d = ref.n_int_d
    n_c = ref.n_int_c
    n_L = n_int + n_d
    g_slot_idx = np.r_[0 : dm.n_loc_facet, dm.n_loc_facet + n_int : dm.n_loc]
    n_G = g_slot_idx.size

    aloc = block.aloc
    a_ii = aloc[:, dm.interior_slots, dm.interior_slots.start : dm.interior_slots.stop]
    a_ig = aloc[:, dm.interior_slots, :][:, :, g_slot_idx]

    k_ll = np.zeros((nt, n_L, n_L))
    k_ll[:, :n_int, :n_int] = a_ii
    for r in range(n_d):
        k_ll[:, n_int + r, n_c + r] = -1.0
        k_ll[:, n_c + r, n_int + r] = -1.0
    inv_l = block.params.inv_lambda
    for r in range(n_d):
        k_ll[:, n_int + r, n_int + r] = -inv_l * mesh.det_j

    k_lg = np.zeros((nt, n_L, n_G))
    k_lg[:, :n_int, :] = a_ig
    f_l = np.zeros((nt, n_L))
    f_l[:, :n_int] = block.floc[:, dm.interior_slots]

    if n_L:
        rhs = np.concatenate([k_lg, f_l[:, :, None]], axis=2)
        sol = np.linalg.solve(k_ll, rhs)
        back_x, back_y = sol[:, :, :n_G], sol[:, :, n_G]
    else:
        back_x = np.zeros((nt, 0, n_G))
        back_y = np.zeros((nt, 0))

    a_gg = aloc[:, g_slot_idx, :][:, :, g_slot_idx]
    a_cond = a_gg - np.einsum("tlg,tlh->tgh", k_lg, back_x)
    f_g_loc = block.floc[:, g_slot_idx] - np.einsum("tlg,tl->tg", k_lg, back_y)

    g_slots = dm.vel_loc[:, g_slot_idx]
    n_cond = split.n_cond
    r = np.broadcast_to(g_slots[:, :, None], a_cond.shape)
    c = np.broadcast_to(g_slots[:, None, :], a_cond.shape)
    a_g_full = sp.coo_matrix(
        (a_cond.ravel(), (r.ravel(), c.ravel())), shape=(n_cond, n_cond)
    ).tocsr()
    a_g_full.sum_duplicates()
    a_g_full.sort_indices()
    f_g_full = np.zeros(n_cond)
    np.add.at(f_g_full, g_slots.ravel(), f_g_loc.ravel())

    b_g_full = block.b_full[:nt, :n_cond].tocsr()

    ess = block.essential
    free_cond = np.flatnonzero(ess.free_mask[:n_cond])
    g = ess.full_vector(split.n_vel)[:n_cond]
    f_g = f_g_full[free_cond] - a_g_full[free_cond] @ g
    f_pbar = block.F_p[:nt]

    return CondensedSystem(
        A_g=SparseSym(a_g_full[free_cond][:, free_cond]),
        B_g=b_g_full[:, free_cond],
        C_g=SparseSym(sp.diags(-inv_l * mesh.areas).tocsr()),
        F_g=f_g,
        F_pbar=f_pbar,
        free_cond=free_cond,
        a_g_full=a_g_full,
        b_g_full=b_g_full,
        back_x=back_x,
        back_y=back_y,
        g_slots=g_slots,
        spaces=spaces,
        block=block,
    )


def back_substitute(
    cond: CondensedSystem, trace_sol: np.ndarray, pbar_sol: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Recover all velocity and pressure coefficients from the condensed
    solution (free trace unknowns) and the elementwise-constant pressure."""
    spaces = cond.spaces
    split = spaces.split
    dm = spaces.dofmap
    ref = spaces.ref
    mesh = spaces.mesh
    nt = mesh.num_triangles
    n_int = dm.n_loc_int

    g_full = cond.block.essential.full_vector(split.n_vel)[: split.n_cond]
    g_full[cond.free_cond] = trace_sol
    g_loc = g_full[cond.g_slots]
    u_l = cond.back_y - np.einsum("tlg,tg->tl", cond.back_x, g_loc)

    vel = np.zeros(split.n_vel)
    vel[: split.n_cond] = g_full
    int_ids = dm.vel_loc[:, dm.interior_slots]
    vel[int_ids.ravel()] = u_l[:, :n_int].ravel()

    pressure = np.zeros(split.n_pressure)
    pressure[:nt] = pbar_sol
    if ref.n_int_d:
        pressure[nt:] = u_l[:, n_int:].ravel()
    return vel, pressure


def build_monolithic(block: BlockSystem):
    """Full saddle matrix over (free velocity, pressure) and its right side."""
    k = sp.bmat(
        [[block.A.csr, block.B.T], [block.B, block.C.csr]], format="csr"
    )
    rhs = np.concatenate([block.F_u, block.F_p])
    return k, rhs


def build_condensed_monolithic(cond: CondensedSystem):
    """Condensed saddle matrix over (free trace unknowns, constant pressure)."""
    k = sp.bmat(
        [[cond.A_g.csr, cond.B_g.T], [cond.B_g, cond.C_g.csr]], format="csr"
    )
    rhs = np.concatenate([cond.F_g, cond.F_pbar])
    return k, rhs
