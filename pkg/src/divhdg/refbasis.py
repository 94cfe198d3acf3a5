"""Reference-element bases for the hybrid divergence-conforming method.

Velocity element: the full degree-k divergence-conforming (vector polynomial)
space on the reference triangle, built hierarchically so static condensation
and the edge-based preconditioner transfer become index bookkeeping:

  (a) one lowest-order normal-flux function per edge (unit flux through its
      own edge, zero normal trace on the other two);
  (b) per edge, k divergence-free "facet bubbles": vector curls of
      lam_p lam_q P_{i-1}(lam_q - lam_p), i = 1..k, whose normal traces span
      the mean-zero polynomials of degree k on that edge and vanish elsewhere;
  (c) interior divergence-free functions: curls of lam_0 lam_1 lam_2 times a
      monomial basis of degree k-2;
  (d) interior functions with zero normal trace whose divergences reproduce
      the mean-zero orthonormal pressure modes exactly (minimum-coefficient-
      norm construction on the reference element).

Groups (a)+(b) are the per-edge "facet" block (condensed unknowns); (c)+(d)
are interior and eliminated element-locally. Under an affine map the
contravariant (Piola) transform preserves normal-trace structure, group (d)
divergences stay orthonormal pressure modes up to 1/det(J), and the local
divergence matrix is geometry independent.

Facet trace space: on each edge the k tangential-trace unknowns use the
orthonormal shifted Legendre modes l_j(s) = sqrt(2j+1) P_j(2s-1) in the global
(low vertex -> high vertex) edge parameterization.

Orientation: bases are stored in the element-local edge orientation; a
per-element sign table converts to the globally oriented basis (lowest-order
flux flips sign under reversal, bubble i picks up (-1)^(i-1)).
"""

from dataclasses import dataclass, field

import numpy as np

from . import poly
from .quadrature import Rule, edge_rule, triangle_rule

REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# local edge l joins vertices (l+1)%3 -> (l+2)%3 and sits opposite vertex l
EDGE_VERTS = np.array([[1, 2], [2, 0], [0, 1]])
REF_NORMALS = np.array(
    [[1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)], [-1.0, 0.0], [0.0, -1.0]]
)
REF_EDGE_LEN = np.array([np.sqrt(2.0), 1.0, 1.0])


def _graded_monomials(max_deg: int) -> list[tuple[int, int]]:
    return [(d - j, j) for d in range(max_deg + 1) for j in range(d + 1)]


def _mono(i: int, j: int, deg: int) -> np.ndarray:
    c = poly.zero(deg)
    c[i, j] = 1.0
    return c


def orthonormal_pressure_modes(k: int) -> np.ndarray:
    """Orthonormal basis of degree-(k-1) polynomials on the reference triangle.

    Mode 0 is constant; modes 1.. are mean zero. Returns (R, k, k) coefficient
    stack with R = k(k+1)/2, orthonormal in the reference L2 inner product.
    """
    monos = _graded_monomials(k - 1)
    r = len(monos)
    out = np.zeros((r, k, k))
    for a, (i, j) in enumerate(monos):
        out[a, i, j] = 1.0
    # repeated orthonormalization passes against the exact Gram matrix remove
    # the conditioning loss of the raw monomial basis
    for _ in range(3):
        gram = np.empty((r, r))
        for a in range(r):
            for b in range(r):
                gram[a, b] = poly.tri_integral(
                    poly.mul(poly.pad(out[a], k - 1), poly.pad(out[b], k - 1))
                )
        coeff = np.linalg.inv(np.linalg.cholesky(gram))
        out = np.einsum("ab,bij->aij", coeff, out)
    return out


@dataclass(frozen=True)
class FacetBasis:
    """1D machinery shared by every edge: orthonormal Legendre trace modes and
    the normal-trace moment matrix of the facet velocity unknowns."""

    k: int
    rule: Rule  # edge quadrature in the global parameter s on [0,1]
    lhat: np.ndarray  # (k, k) coefficients of l_j, j = 0..k-1 (tangential modes)
    lhat_vals: np.ndarray  # (k, Qe) values at rule points
    modes_full: np.ndarray  # (k+1, k+1) l_j for j = 0..k
    modes_vals: np.ndarray  # (k+1, Qe)
    theta: np.ndarray  # (k+1, k+1): int theta_i l_j ds, theta_i = edge-normal traces
    theta_vals: np.ndarray  # (k+1, Qe) normal-trace profiles (1/|e| scaling excluded)

    def normal_coeffs_from_moments(self, m: np.ndarray) -> np.ndarray:
        """Solve for facet-normal coefficients c with sum_i c_i theta_i matching
        the k+1 Legendre moments m (normal traces span degree-k polynomials)."""
        return np.linalg.solve(self.theta.T, m)


def build_facet_basis(k: int) -> FacetBasis:
    rule = edge_rule(2 * k + 2)
    s = rule.points[:, 0]
    w = rule.weights
    modes = np.zeros((k + 1, k + 1))
    for j in range(k + 1):
        c = np.sqrt(2 * j + 1) * poly.shifted_legendre(j)
        modes[j, : c.size] = c
    modes_vals = np.array([poly.eval_1d(modes[j], s) for j in range(k + 1)])

    # normal-trace profiles: theta_0 = 1 (lowest-order flux), theta_i = g_i'
    # with g_i = s(1-s) P_{i-1}(2s-1)
    theta_vals = np.zeros((k + 1, rule.points.shape[0]))
    theta_vals[0] = 1.0
    bump = np.array([0.0, 1.0, -1.0])  # s(1-s)
    for i in range(1, k + 1):
        g = np.polynomial.polynomial.polymul(bump, poly.shifted_legendre(i - 1))
        dg = np.polynomial.polynomial.polyder(g)
        theta_vals[i] = poly.eval_1d(dg, s)
    theta = np.einsum("iq,jq,q->ij", theta_vals, modes_vals, w)
    return FacetBasis(
        k=k,
        rule=rule,
        lhat=modes[:k, :k].copy(),
        lhat_vals=modes_vals[:k],
        modes_full=modes,
        modes_vals=modes_vals,
        theta=theta,
        theta_vals=theta_vals,
    )


@dataclass(frozen=True)
class ReferenceBasis:
    k: int
    coeffs: np.ndarray  # (n_u, 2, k+1, k+1) monomial tables
    div_coeffs: np.ndarray  # (n_u, k, k)
    qmodes: np.ndarray  # (R, k, k) orthonormal pressure modes, mode 0 constant
    n_facet: int  # 3(k+1)
    n_int_c: int  # divergence-free interior count
    n_int_d: int  # divergence-carrying interior count
    vol_rule: Rule
    vol_vals: np.ndarray  # (n_u, Q, 2)
    vol_grads: np.ndarray  # (n_u, Q, 2, 2)
    vol_divs: np.ndarray  # (n_u, Q)
    vol_qvals: np.ndarray  # (R, Q)
    facet: FacetBasis
    edge_vals: dict  # (l, flip) -> (n_u, Qe, 2)
    edge_grads: dict  # (l, flip) -> (n_u, Qe, 2, 2)
    _extra_volume: dict = field(default_factory=dict, repr=False)

    @property
    def n_u(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_int(self) -> int:
        return self.n_int_c + self.n_int_d

    @property
    def n_pressure(self) -> int:
        return self.qmodes.shape[0]

    def facet_slice(self, l: int) -> slice:
        return slice(l * (self.k + 1), (l + 1) * (self.k + 1))

    @property
    def interior_slice(self) -> slice:
        return slice(self.n_facet, self.n_u)

    def facet_sign_exponents(self) -> np.ndarray:
        """Per-DOF exponent e so the globally oriented basis equals
        (-1)^(e * flip) times the locally oriented one (interior DOFs: 0)."""
        exps = np.zeros(self.n_u, np.int64)
        for l in range(3):
            base = l * (self.k + 1)
            exps[base] = 1  # lowest-order flux
            for i in range(1, self.k + 1):
                exps[base + i] = i - 1
        return exps

    def volume_tables(self, degree: int):
        """(rule, vals, grads, divs, qvals) on a rule exact to `degree`."""
        if degree <= self.vol_rule.degree:
            return (
                self.vol_rule,
                self.vol_vals,
                self.vol_grads,
                self.vol_divs,
                self.vol_qvals,
            )
        if degree not in self._extra_volume:
            rule = triangle_rule(degree)
            self._extra_volume[degree] = (rule,) + _volume_tables(
                self.coeffs, self.div_coeffs, self.qmodes, rule
            )
        return self._extra_volume[degree]


def _volume_tables(coeffs, div_coeffs, qmodes, rule: Rule):
    x, y = rule.points[:, 0], rule.points[:, 1]
    vals = np.transpose(poly.eval_at(coeffs, x, y), (0, 2, 1))  # (n_u, Q, 2)
    n_u = coeffs.shape[0]
    dmax = coeffs.shape[-1] - 1
    grads = np.zeros((n_u, rule.points.shape[0], 2, 2))
    for i in range(n_u):
        for a in range(2):
            gx = poly.pad(poly.diff_x(coeffs[i, a]), max(dmax - 1, 0))
            gy = poly.pad(poly.diff_y(coeffs[i, a]), max(dmax - 1, 0))
            grads[i, :, a, 0] = poly.eval_at(gx, x, y)
            grads[i, :, a, 1] = poly.eval_at(gy, x, y)
    divs = poly.eval_at(div_coeffs, x, y)
    qvals = poly.eval_at(qmodes, x, y)
    return vals, grads, divs, qvals


def _nullspace_interior(k: int, facet: FacetBasis) -> np.ndarray:
    """Coefficients (n, 2, k+1, k+1) of a basis of the zero-normal-trace
    subspace of degree-k vector polynomials (dimension k^2 - 1)."""
    monos = _graded_monomials(k)
    t = len(monos)
    cols = []  # (2, k+1, k+1) per column
    for comp in range(2):
        for i, j in monos:
            c = np.zeros((2, k + 1, k + 1))
            c[comp, i, j] = 1.0
            cols.append(c)
    stack = np.array(cols)  # (2t, 2, k+1, k+1)

    s = facet.rule.points[:, 0]
    w = facet.rule.weights
    rows = []
    for l in range(3):
        p, q = EDGE_VERTS[l]
        pts = REF_VERTS[p][None, :] * (1.0 - s[:, None]) + REF_VERTS[q][None, :] * s[
            :, None
        ]
        vals = poly.eval_at(stack, pts[:, 0], pts[:, 1])  # (2t, 2, Qe)
        ntr = np.einsum("cdq,d->cq", vals, REF_NORMALS[l])
        rows.append(np.einsum("cq,jq,q->jc", ntr, facet.modes_vals, w))
    constraint = np.concatenate(rows)  # (3(k+1), 2t)
    _, sv, vh = np.linalg.svd(constraint)
    tol = max(constraint.shape) * np.finfo(float).eps * (sv[0] if sv.size else 1.0)
    rank = int(np.sum(sv > tol))
    null = vh[rank:]  # (k^2 - 1, 2t)
    if null.shape[0] != k * k - 1:
        raise RuntimeError(
            f"zero-trace subspace has dimension {null.shape[0]}, expected {k * k - 1}"
        )
    return np.einsum("nc,cdij->ndij", null, stack)


def build_reference_bdm(k: int) -> ReferenceBasis:
    """Construct the hierarchical reference basis and all evaluation tables."""
    if not 1 <= k <= 4:
        raise ValueError("polynomial degree k must be in 1..4")
    facet = build_facet_basis(k)
    lam = poly.barycentric()
    deg = k + 1  # storage degree for vector components

    funcs = []  # (2, k+1, k+1) arrays

    # facet blocks: per edge, lowest-order flux then k curls of edge bubbles
    for l in range(3):
        p, q = EDGE_VERTS[l]
        rt = np.zeros((2, k + 1, k + 1))
        # x - v_l has unit flux through edge l and zero normal trace elsewhere
        rt[0, 1, 0] = 1.0
        rt[0, 0, 0] = -REF_VERTS[l][0]
        rt[1, 0, 1] = 1.0
        rt[1, 0, 0] = -REF_VERTS[l][1]
        funcs.append(rt)
        edge_lin = poly.add(lam[q], -lam[p])
        for i in range(1, k + 1):
            gen = poly.mul(
                poly.mul(lam[p], lam[q]),
                poly.compose_1d(poly.legendre_1d(i - 1), edge_lin),
            )
            funcs.append(_pad_vec(poly.curl(gen), k))

    # interior divergence-free: curls of the element bubble times P^{k-2}
    bubble = poly.mul(poly.mul(lam[0], lam[1]), lam[2])
    monos_c = _graded_monomials(k - 2) if k >= 2 else []
    for i, j in monos_c:
        gen = poly.mul(bubble, _mono(i, j, max(k - 2, 0)))
        funcs.append(_pad_vec(poly.curl(gen), k))
    n_int_c = len(monos_c)

    # interior divergence carriers: zero normal trace, div = mean-zero modes
    qmodes = orthonormal_pressure_modes(k)
    n_int_d = qmodes.shape[0] - 1
    if n_int_d:
        zcols = _nullspace_interior(k, facet)  # (k^2-1, 2, k+1, k+1)
        div_rows = np.array(
            [
                [
                    poly.tri_integral(
                        poly.mul(poly.divergence(z), poly.pad(qmodes[r], 2 * k))
                    )
                    for z in zcols
                ]
                for r in range(qmodes.shape[0])
            ]
        )  # (R, k^2-1)
        if np.max(np.abs(div_rows[0])) > 1e-10:
            raise RuntimeError("zero-trace functions acquired nonzero mean divergence")
        sol, *_ = np.linalg.lstsq(div_rows[1:], np.eye(n_int_d), rcond=None)
        for _ in range(2):
            corr, *_ = np.linalg.lstsq(
                div_rows[1:], np.eye(n_int_d) - div_rows[1:] @ sol, rcond=None
            )
            sol = sol + corr
        psi = np.einsum("nj,ndab->jdab", sol, zcols)
        for j in range(n_int_d):
            funcs.append(psi[j])

    coeffs = np.array(funcs)
    n_u = coeffs.shape[0]
    assert n_u == (k + 1) * (k + 2), n_u

    div_coeffs = np.zeros((n_u, k, k))
    for i in range(n_u):
        d = poly.divergence(coeffs[i])
        div_coeffs[i] = poly.pad(d, k - 1)

    vol_rule = triangle_rule(2 * k + 2)
    vol_vals, vol_grads, vol_divs, vol_qvals = _volume_tables(
        coeffs, div_coeffs, qmodes, vol_rule
    )

    s = facet.rule.points[:, 0]
    edge_vals, edge_grads = {}, {}
    for l in range(3):
        p, q = EDGE_VERTS[l]
        for flip in (0, 1):
            u = 1.0 - s if flip else s
            pts = REF_VERTS[p][None, :] * (1.0 - u[:, None]) + REF_VERTS[q][
                None, :
            ] * u[:, None]
            x, y = pts[:, 0], pts[:, 1]
            vals = np.transpose(poly.eval_at(coeffs, x, y), (0, 2, 1))
            grads = np.zeros((n_u, s.size, 2, 2))
            for i in range(n_u):
                for a in range(2):
                    grads[i, :, a, 0] = poly.eval_at(
                        poly.pad(poly.diff_x(coeffs[i, a]), k), x, y
                    )
                    grads[i, :, a, 1] = poly.eval_at(
                        poly.pad(poly.diff_y(coeffs[i, a]), k), x, y
                    )
            edge_vals[(l, flip)] = vals
            edge_grads[(l, flip)] = grads

    return ReferenceBasis(
        k=k,
        coeffs=coeffs,
        div_coeffs=div_coeffs,
        qmodes=qmodes,
        n_facet=3 * (k + 1),
        n_int_c=n_int_c,
        n_int_d=n_int_d,
        vol_rule=vol_rule,
        vol_vals=vol_vals,
        vol_grads=vol_grads,
        vol_divs=vol_divs,
        vol_qvals=vol_qvals,
        facet=facet,
        edge_vals=edge_vals,
        edge_grads=edge_grads,
    )


def _pad_vec(v: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((2, k + 1, k + 1))
    d = v.shape[-1]
    out[:, :d, :d] = v
    return out


def map_piola(jac: np.ndarray, det: float, vals: np.ndarray) -> np.ndarray:
    """Contravariant (Piola) map of reference H(div) values onto a physical
    element: v -> J v / det J, so normal fluxes are preserved across shared
    facets. Divergences transform separately as div -> div / det J."""
    return np.einsum("ab,...b->...a", np.asarray(jac), np.asarray(vals)) / det
