"""Global degree-of-freedom management for the hybrid velocity/pressure pair.

Velocity unknowns, in global numbering order:
  * facet-normal block ("condensed" part 1): per edge, k+1 coefficients of the
    normal-trace functions (lowest-order flux first, then k flux bubbles),
    id = e*(k+1) + m;
  * tangential trace block ("condensed" part 2): per edge, k coefficients of
    the orthonormal Legendre tangential modes in the global a -> b edge
    parameterization, id = n_bnd + e*k + j;
  * element-interior block (eliminated): per triangle, k^2 - 1 coefficients
    (divergence-free group first, then divergence carriers).

Pressure unknowns: elementwise-constant part first (one per triangle,
basis = indicator), then per triangle the mean-zero orthonormal modes.

Element-local velocity slot order is [3(k+1) facet | k^2-1 interior | 3k
tangential]; the sign table converts locally oriented facet functions to the
globally oriented basis.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import TAG_INLET, TAG_LID, TAG_OUTLET, TAG_WALL, Mesh
from .refbasis import ReferenceBasis, build_reference_bdm


@dataclass(frozen=True)
class SpaceSplit:
    k: int
    n_edges: int
    n_tris: int

    @property
    def n_bnd(self) -> int:  # facet-normal velocity unknowns
        return (self.k + 1) * self.n_edges

    @property
    def n_hat(self) -> int:  # tangential trace unknowns
        return self.k * self.n_edges

    @property
    def n_int(self) -> int:  # interior velocity unknowns
        return (self.k * self.k - 1) * self.n_tris

    @property
    def n_cond(self) -> int:  # condensed (facet-normal + tangential) unknowns
        return self.n_bnd + self.n_hat

    @property
    def n_vel(self) -> int:
        return self.n_bnd + self.n_hat + self.n_int

    @property
    def n_pbar(self) -> int:
        return self.n_tris

    @property
    def n_pint(self) -> int:
        return (self.k * (self.k + 1) // 2 - 1) * self.n_tris

    @property
    def n_pressure(self) -> int:
        return self.n_pbar + self.n_pint


@dataclass(frozen=True)
class DofMap:
    vel_loc: np.ndarray  # (nt, n_loc) global velocity id per local slot
    signs: np.ndarray  # (nt, n_loc) +-1 local -> global orientation factors
    n_loc: int
    n_loc_facet: int  # 3(k+1)
    n_loc_int: int  # k^2-1
    n_loc_hat: int  # 3k

    @property
    def facet_slots(self) -> slice:
        return slice(0, self.n_loc_facet)

    @property
    def interior_slots(self) -> slice:
        return slice(self.n_loc_facet, self.n_loc_facet + self.n_loc_int)

    @property
    def hat_slots(self) -> slice:
        return slice(self.n_loc_facet + self.n_loc_int, self.n_loc)


@dataclass(frozen=True)
class Spaces:
    mesh: Mesh
    k: int
    ref: ReferenceBasis
    split: SpaceSplit
    dofmap: DofMap


def build_spaces(mesh: Mesh, k: int) -> Spaces:
    ref = build_reference_bdm(k)
    split = SpaceSplit(k=k, n_edges=mesh.num_edges, n_tris=mesh.num_triangles)
    nt = mesh.num_triangles
    n_loc = ref.n_u + 3 * k

    vel_loc = np.empty((nt, n_loc), np.int64)
    signs = np.ones((nt, n_loc))
    exps = ref.facet_sign_exponents()
    for l in range(3):
        e = mesh.tri_edges[:, l]
        flip = mesh.tri_edge_flip[:, l].astype(np.int64)
        base = l * (k + 1)
        for m in range(k + 1):
            vel_loc[:, base + m] = e * (k + 1) + m
            signs[:, base + m] = np.where((exps[base + m] * flip) % 2, -1.0, 1.0)
        for j in range(k):
            vel_loc[:, ref.n_u + l * k + j] = split.n_bnd + e * k + j
    n_int = k * k - 1
    for i in range(n_int):
        vel_loc[:, ref.n_facet + i] = split.n_bnd + split.n_hat + np.arange(nt) * n_int + i

    dofmap = DofMap(
        vel_loc=vel_loc,
        signs=signs,
        n_loc=n_loc,
        n_loc_facet=ref.n_facet,
        n_loc_int=n_int,
        n_loc_hat=3 * k,
    )
    return Spaces(mesh=mesh, k=k, ref=ref, split=split, dofmap=dofmap)


@dataclass(frozen=True)
class EssentialData:
    """Prescribed velocity unknowns: sorted ids, matching values, and the
    complementary free mask over all velocity unknowns."""

    ids: np.ndarray
    values: np.ndarray
    free_mask: np.ndarray

    @property
    def free_ids(self) -> np.ndarray:
        return np.flatnonzero(self.free_mask)

    def full_vector(self, n_vel: int) -> np.ndarray:
        g = np.zeros(n_vel)
        g[self.ids] = self.values
        return g


def _boundary_velocity(problem: str):
    """Map edge tag -> callable(points (Q,2)) -> velocity (Q,2) for the
    essentially imposed parts of the boundary."""

    def zero(x):
        return np.zeros_like(x)

    def lid(x):
        return np.column_stack([4.0 * x[:, 0] * (1.0 - x[:, 0]), np.zeros(len(x))])

    def inlet(x):
        y = x[:, 1]
        return np.column_stack([16.0 * (1.0 - y) * (y - 0.5), np.zeros(len(x))])

    if problem in ("cavity", "elast-steady", "elast-unsteady"):
        return {TAG_LID: lid, TAG_WALL: zero}
    if problem == "step":
        return {TAG_INLET: inlet, TAG_WALL: zero}
    raise ValueError(f"unknown problem '{problem}'")


def interpolate_essential(mesh: Mesh, spaces: Spaces, problem: str) -> EssentialData:
    """Project boundary velocity data onto the trace unknowns of tagged edges.

    Normal part: the k+1 facet-normal coefficients solve the moment system
    matching <v . n, l_j> on the edge for the full degree-k Legendre stack
    (exact whenever the data's normal trace has degree <= k). Tangential part:
    Legendre coefficients of v . t. Outlet edges stay free.
    """
    k = spaces.k
    ref = spaces.ref
    fb = ref.facet
    data = _boundary_velocity(problem)
    s = fb.rule.points[:, 0]
    w = fb.rule.weights

    ids, vals = [], []
    for e in mesh.boundary_edges():
        tag = int(mesh.edge_tags[e])
        if tag == TAG_OUTLET:
            continue
        g = data[tag]
        a, b = mesh.edges[e]
        pts = mesh.vertices[a][None, :] * (1.0 - s[:, None]) + mesh.vertices[b][
            None, :
        ] * s[:, None]
        gv = g(pts)
        t = mesh.tangents[e]
        n = np.array([t[1], -t[0]])  # vertex-ordered normal (rot -90 of tangent)
        le = mesh.edge_lengths[e]
        m = le * np.einsum("q,jq,q->j", gv @ n, fb.modes_vals, w)
        c = fb.normal_coeffs_from_moments(m)
        d = np.einsum("q,jq,q->j", gv @ t, fb.lhat_vals, w)
        for mm in range(k + 1):
            ids.append(e * (k + 1) + mm)
            vals.append(c[mm])
        for j in range(k):
            ids.append(spaces.split.n_bnd + e * k + j)
            vals.append(d[j])

    ids = np.array(ids, np.int64)
    order = np.argsort(ids)
    ids = ids[order]
    vals = np.array(vals)[order]
    free = np.ones(spaces.split.n_vel, bool)
    free[ids] = False
    return EssentialData(ids=ids, values=vals, free_mask=free)
