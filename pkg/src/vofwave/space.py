"""Energy-based DG spaces on periodic Cartesian meshes.

Unknowns are modal coefficients in element-major order. The displacement u
lives in a degree-``q_u`` space tested against gradients, the velocity v in a
degree-``q_v`` space tested in L2. On a face with low-side element L
(outward normal +e) and high-side element R the numerical traces are

    v*      = theta v_R + (1 - theta) v_L - zeta [grad u]
    (grad u)* . e = (1 - theta) d_n u_R + theta d_n u_L - gamma (v_L - v_R)

with [grad u] = d_n u_L - d_n u_R, i.e. R plays the "+" side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import PeriodicMesh
from .quadrature import BasisSpec, gauss_rule


def admissible(q_u: int, q_v: int) -> bool:
    return q_u >= 1 and q_u - 2 <= q_v <= q_u


@dataclass(frozen=True)
class FluxParams:
    theta: float = 0.0
    gamma: float = 0.0
    zeta: float = 0.0

    def __post_init__(self):
        if self.gamma < 0 or self.zeta < 0:
            raise ValueError("flux dissipation parameters gamma and zeta must be nonnegative")

    @property
    def optimal_pairing(self) -> bool:
        """theta (1 - theta) == gamma zeta, the condition for the optimal estimate."""
        return bool(np.isclose(self.theta * (1.0 - self.theta), self.gamma * self.zeta, rtol=0, atol=1e-14))


@dataclass(frozen=True)
class FieldVector:
    role: str  # "u" or "v"
    coeffs: np.ndarray

    def __post_init__(self):
        if self.role not in ("u", "v"):
            raise ValueError(f"unknown field role {self.role!r}")

    def __add__(self, other):
        _same_role(self, other)
        return FieldVector(self.role, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_role(self, other)
        return FieldVector(self.role, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return FieldVector(self.role, s * self.coeffs)

    __rmul__ = __mul__


def _same_role(a, b):
    if a.role != b.role:
        raise ValueError(f"cannot combine a {a.role}-field with a {b.role}-field")


def _scatter(blocks, rows_el, cols_el, nr, nc, shape):
    """Sum per-face dense blocks into a global sparse matrix."""
    rows, cols, data = [], [], []
    ir = np.arange(nr)[None, :, None]
    ic = np.arange(nc)[None, None, :]
    for B, re, ce in zip(blocks, rows_el, cols_el):
        if not np.any(B):
            continue
        nf = len(re)
        r = np.broadcast_to(re[:, None, None] * nr + ir, (nf, nr, nc))
        c = np.broadcast_to(ce[:, None, None] * nc + ic, (nf, nr, nc))
        rows.append(r.ravel())
        cols.append(c.ravel())
        data.append(np.broadcast_to(B[None], (nf, nr, nc)).ravel())
    if not rows:
        return sp.csr_matrix(shape)
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


@dataclass
class FaceTables:
    """Traces of both bases on the faces normal to one axis."""

    axis: int
    left: np.ndarray
    right: np.ndarray
    weights: np.ndarray  # physical face weights
    val_u: tuple  # (on L side, on R side), each (nb_u, nq)
    dn_u: tuple  # physical normal derivative along +e_axis
    val_v: tuple


@dataclass
class DgSpace:
    mesh: PeriodicMesh
    q_u: int
    q_v: int
    flux: FluxParams
    basis_u: BasisSpec = field(init=False)
    basis_v: BasisSpec = field(init=False)
    ops: dict = field(init=False, repr=False)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def nel(self) -> int:
        return self.mesh.num_elements

    @property
    def nb_u(self) -> int:
        return self.basis_u.size

    @property
    def nb_v(self) -> int:
        return self.basis_v.size

    @property
    def n_u(self) -> int:
        return self.nel * self.nb_u

    @property
    def n_v(self) -> int:
        return self.nel * self.nb_v

    @property
    def constant_rows(self) -> np.ndarray:
        """Index of the constant u-mode in every element."""
        return np.arange(self.nel) * self.nb_u

    def size(self, role: str) -> int:
        return self.n_u if role == "u" else self.n_v

    def zeros(self, role: str) -> FieldVector:
        return FieldVector(role, np.zeros(self.size(role)))

    # -- evaluation ------------------------------------------------------
    def evaluate(self, field_: FieldVector, ref_points, derivative: bool = False):
        """Field values (or physical gradients) at reference points of every element."""
        basis = self.basis_u if field_.role == "u" else self.basis_v
        vals, grads = basis.tabulate(ref_points)
        coef = field_.coeffs.reshape(self.nel, basis.size)
        if not derivative:
            return coef @ vals
        scale = 2.0 / np.asarray(self.mesh.h)
        return np.stack([scale[a] * (coef @ grads[a]) for a in range(self.dim)], axis=-1)

    def load_vector(self, func, npoints: int | None = None) -> np.ndarray:
        """Integrals of ``func(x)`` against every v-mode."""
        rule = gauss_rule(npoints or self.q_u + 2, self.dim)
        vals, _ = self.basis_v.tabulate(rule.nodes)
        X = self.mesh.map_points(rule.nodes)
        F = np.asarray(func(X), dtype=float)
        return ((F * rule.weights) @ vals.T * self.mesh.jacobian).ravel()

    def source_load(self, func, t: float) -> np.ndarray:
        X, test = self._source_tables
        F = np.asarray(func(X, t), dtype=float)
        return (F @ test).ravel()

    def l2_norm_sq(self, field_: FieldVector) -> float:
        M = self.ops["mass_u" if field_.role == "u" else "mass_v"]
        return float(field_.coeffs @ (M @ field_.coeffs))

    def grad_norm_sq(self, u: FieldVector) -> float:
        return float(u.coeffs @ (self.ops["stiffness_u"] @ u.coeffs))


def _volume_tables(space: DgSpace):
    rule = gauss_rule(max(space.q_u, space.q_v) + 2, space.dim)
    vu, gu = space.basis_u.tabulate(rule.nodes)
    vv, gv = space.basis_v.tabulate(rule.nodes)
    return rule, vu, gu, vv, gv


def _face_tables(space: DgSpace, axis: int) -> FaceTables:
    mesh = space.mesh
    faces = mesh.faces(axis)
    h = np.asarray(mesh.h)
    if space.dim == 1:
        pts_L, pts_R = np.array([1.0]), np.array([-1.0])
        w = np.array([1.0])
    else:
        r = gauss_rule(max(space.q_u, space.q_v) + 1)
        other = 1 - axis
        pts_L = np.zeros((r.npoints, 2))
        pts_L[:, axis] = 1.0
        pts_L[:, other] = r.nodes
        pts_R = pts_L.copy()
        pts_R[:, axis] = -1.0
        w = r.weights * h[other] / 2.0
    scale = 2.0 / h[axis]
    tabs = {}
    for side, pts in (("L", pts_L), ("R", pts_R)):
        vu, gu = space.basis_u.tabulate(pts)
        vv, _ = space.basis_v.tabulate(pts)
        tabs[side] = (vu, scale * gu[axis], vv)
    return FaceTables(
        axis,
        faces.left,
        faces.right,
        w,
        (tabs["L"][0], tabs["R"][0]),
        (tabs["L"][1], tabs["R"][1]),
        (tabs["L"][2], tabs["R"][2]),
    )


def _face_blocks(ft: FaceTables, flux: FluxParams):
    """Dense L/R blocks of the four flux forms on one face."""
    th, ga, ze = flux.theta, flux.gamma, flux.zeta
    W = ft.weights

    def ip(a, b):
        return (a * W) @ b.T

    dL, dR = ft.dn_u
    vL, vR = ft.val_v
    # order in each tuple: LL, LR, RL, RR (test side, trial side)
    Pv = (-th * ip(dL, vL), th * ip(dL, vR), -(1 - th) * ip(dR, vL), (1 - th) * ip(dR, vR))
    Pu = (-ze * ip(dL, dL), ze * ip(dL, dR), ze * ip(dR, dL), -ze * ip(dR, dR))
    Qu = (th * ip(vL, dL), (1 - th) * ip(vL, dR), -th * ip(vR, dL), -(1 - th) * ip(vR, dR))
    Qv = (-ga * ip(vL, vL), ga * ip(vL, vR), ga * ip(vR, vL), -ga * ip(vR, vR))
    return {"Pv": Pv, "Pu": Pu, "Qu": Qu, "Qv": Qv}


def assemble_space(mesh: PeriodicMesh, q_u: int, q_v: int, flux: FluxParams | None = None,
                   source_points: int | None = None) -> DgSpace:
    """Build element and face operators for the pair (q_u, q_v).

    ``source_points`` is the Gauss rule size per axis used for source loads
    (default max(q_u, q_v) + 3).
    """
    if not admissible(q_u, q_v):
        raise ValueError(
            f"degree pair (q_u, q_v) = ({q_u}, {q_v}) is not admissible: "
            "need q_u >= 1 and q_u - 2 <= q_v <= q_u"
        )
    flux = flux or FluxParams()
    space = DgSpace(mesh, q_u, q_v, flux)
    space.basis_u = BasisSpec(q_u, mesh.dim)
    space.basis_v = BasisSpec(q_v, mesh.dim)
    nel, nbu, nbv = space.nel, space.nb_u, space.nb_v
    J = mesh.jacobian
    h = np.asarray(mesh.h)

    rule, vu, gu, vv, gv = _volume_tables(space)
    w = rule.weights
    K_ref = sum((2.0 / h[a]) ** 2 * (gu[a] * w) @ gu[a].T for a in range(mesh.dim)) * J
    Kvu_ref = sum((2.0 / h[a]) ** 2 * (gv[a] * w) @ gu[a].T for a in range(mesh.dim)) * J
    Mu_ref = (vu * w) @ vu.T * J
    Mv_ref = (vv * w) @ vv.T * J
    Muv_ref = (vu * w) @ vv.T * J
    eye = sp.identity(nel, format="csr")
    ops = {
        "stiffness_u": sp.kron(eye, K_ref, format="csr"),
        "stiffness_vu": sp.kron(eye, Kvu_ref, format="csr"),
        "mass_u": sp.kron(eye, Mu_ref, format="csr"),
        "mass_v": sp.kron(eye, Mv_ref, format="csr"),
    }
    ops["grad_coupling"] = ops["stiffness_vu"].T.tocsr()

    shapes = {"Pv": (nbu, nbv), "Pu": (nbu, nbu), "Qu": (nbv, nbu), "Qv": (nbv, nbv)}
    gshape = {"Pv": (space.n_u, space.n_v), "Pu": (space.n_u, space.n_u), "Qu": (space.n_v, space.n_u), "Qv": (space.n_v, space.n_v)}
    face_ops = {k: sp.csr_matrix(gshape[k]) for k in shapes}
    space.face_tables = []
    for axis in range(mesh.dim):
        ft = _face_tables(space, axis)
        space.face_tables.append(ft)
        blocks = _face_blocks(ft, flux)
        L, R = ft.left, ft.right
        for k, blk in blocks.items():
            nr, nc = shapes[k]
            face_ops[k] = face_ops[k] + _scatter(blk, (L, L, R, R), (L, R, L, R), nr, nc, gshape[k])
    ops["flux_v_to_u"] = face_ops["Pv"]
    ops["flux_u_to_u"] = face_ops["Pu"]
    ops["flux_u_to_v"] = face_ops["Qu"]
    ops["flux_v_to_v"] = face_ops["Qv"]

    # first equation: gradient-tested rows, constant-mode rows replaced by the mean constraint
    crow = space.constant_rows
    keep = np.ones(space.n_u)
    keep[crow] = 0.0
    Dkeep = sp.diags(keep)
    mean_u = sp.csr_matrix((np.full(nel, Mu_ref[0, 0]), (crow, crow)), shape=(space.n_u, space.n_u))
    mean_v = sp.csr_matrix((np.full(nel, Muv_ref[0, 0]), (crow, np.arange(nel) * nbv)), shape=(space.n_u, space.n_v))
    ops["time_u"] = (Dkeep @ ops["stiffness_u"] + mean_u).tocsr()
    ops["rhs_uu"] = (Dkeep @ ops["flux_u_to_u"]).tocsr()
    ops["rhs_uv"] = (Dkeep @ (ops["grad_coupling"] + ops["flux_v_to_u"]) + mean_v).tocsr()
    ops["rhs_vu"] = (ops["flux_u_to_v"] - ops["stiffness_vu"]).tocsr()
    ops["rhs_vv"] = ops["flux_v_to_v"].tocsr()
    for M in ops.values():
        M.eliminate_zeros()
    space.ops = ops

    src_rule = gauss_rule(source_points or max(q_u, q_v) + 3, mesh.dim)
    svals, _ = space.basis_v.tabulate(src_rule.nodes)
    space._source_tables = (mesh.map_points(src_rule.nodes), (svals * src_rule.weights).T * J)

    # local H1 system on the non-constant u-modes
    space._h1_local = np.linalg.inv(K_ref[1:, 1:]) if nbu > 1 else np.zeros((0, 0))
    return space


# operator name -> (input role, output role)
OPERATORS = {
    "mass_u": ("u", "u"),
    "mass_v": ("v", "v"),
    "stiffness_u": ("u", "u"),
    "stiffness_vu": ("u", "v"),
    "grad_coupling": ("v", "u"),
    "flux_v_to_u": ("v", "u"),
    "flux_u_to_u": ("u", "u"),
    "flux_u_to_v": ("u", "v"),
    "flux_v_to_v": ("v", "v"),
}


def apply_operator(space: DgSpace, descriptor: dict, fields: dict) -> FieldVector:
    """Apply ``sum_k scale_k * op_k`` to the fields; ``fields`` maps role to FieldVector."""
    out_role = None
    out = None
    for name, scale in descriptor.items():
        if name not in OPERATORS:
            raise ValueError(f"unknown operator {name!r}")
        rin, rout = OPERATORS[name]
        if out_role is None:
            out_role, out = rout, np.zeros(space.size(rout))
        elif rout != out_role:
            raise ValueError(f"operator {name!r} produces a {rout}-field, expected {out_role}")
        f = fields.get(rin)
        if f is None:
            raise ValueError(f"operator {name!r} needs a {rin}-field")
        if f.role != rin or f.coeffs.shape != (space.size(rin),):
            raise ValueError(f"operator {name!r} expects a {rin}-field of length {space.size(rin)}")
        out = out + scale * (space.ops[name] @ f.coeffs)
    if out_role is None:
        raise ValueError("empty operator descriptor")
    return FieldVector(out_role, out)


def flux_dissipation(space: DgSpace, u: FieldVector, v: FieldVector) -> float:
    """Sum over element boundaries of grad(u).n (v* - v) + v (grad u)*.n."""
    o = space.ops
    uc, vc = u.coeffs, v.coeffs
    return float(
        uc @ (o["flux_v_to_u"] @ vc)
        + uc @ (o["flux_u_to_u"] @ uc)
        + vc @ (o["flux_u_to_v"] @ uc)
        + vc @ (o["flux_v_to_v"] @ vc)
    )


def _fd_gradient(func, dim, step=1e-6):
    def grad(x):
        x = np.asarray(x, dtype=float)
        out = []
        for a in range(dim):
            e = np.zeros(dim)
            e[a] = step
            out.append((func(x + e) - func(x - e)) / (2 * step))
        return np.stack(out, axis=-1)

    return grad


def project_initial(space: DgSpace, u0, v0, grad_u0=None, npoints: int | None = None):
    """Elementwise H1 projection (with matched means) of u0 and L2 projection of v0.

    ``grad_u0`` should return the physical gradient with a trailing axis of
    length dim; without it a centered difference is used.
    """
    if grad_u0 is None:
        grad_u0 = _fd_gradient(u0, space.dim)
    rule = gauss_rule(npoints or space.q_u + 4, space.dim)
    X = space.mesh.map_points(rule.nodes)
    J = space.mesh.jacobian
    h = np.asarray(space.mesh.h)
    w = rule.weights

    vu, gu = space.basis_u.tabulate(rule.nodes)
    U = np.asarray(u0(X), dtype=float)
    GU = np.asarray(grad_u0(X), dtype=float).reshape(X.shape)
    cu = np.empty((space.nel, space.nb_u))
    cu[:, 0] = (U * w) @ vu[0] * J / space.ops["mass_u"][0, 0]
    if space.nb_u > 1:
        rhs = sum((2.0 / h[a]) * ((GU[..., a] * w) @ gu[a][1:].T) for a in range(space.dim)) * J
        cu[:, 1:] = rhs @ space._h1_local.T
    vv, _ = space.basis_v.tabulate(rule.nodes)
    V = np.asarray(v0(X), dtype=float)
    Mv = space.ops["mass_v"][:space.nb_v, :space.nb_v].toarray()
    cv = np.linalg.solve(Mv, ((V * w) @ vv.T * J).T).T
    return FieldVector("u", cu.ravel()), FieldVector("v", cv.ravel())


def error_norm(space: DgSpace, field_: FieldVector, exact, gradient: bool = False, npoints: int | None = None) -> float:
    """Broken L2 norm (or H1 seminorm) of exact - field with q_u + 1 Gauss points per axis."""
    rule = gauss_rule(npoints or space.q_u + 1, space.dim)
    X = space.mesh.map_points(rule.nodes)
    w = rule.weights * space.mesh.jacobian
    approx = space.evaluate(field_, rule.nodes, derivative=gradient)
    diff = np.asarray(exact(X), dtype=float).reshape(approx.shape) - approx
    if gradient:
        diff2 = np.sum(diff**2, axis=-1)
    else:
        diff2 = diff**2
    return float(np.sqrt(np.sum(diff2 * w)))


def jump_penalty(space: DgSpace, u: FieldVector, v: FieldVector) -> float:
    """Sum over faces of gamma |[v]|^2 + zeta |[grad u]|^2, from trace tables."""
    total = 0.0
    cu = u.coeffs.reshape(space.nel, space.nb_u)
    cv = v.coeffs.reshape(space.nel, space.nb_v)
    for ft in space.face_tables:
        jv = cv[ft.left] @ ft.val_v[0] - cv[ft.right] @ ft.val_v[1]
        ju = cu[ft.left] @ ft.dn_u[0] - cu[ft.right] @ ft.dn_u[1]
        total += np.sum((space.flux.gamma * jv**2 + space.flux.zeta * ju**2) * ft.weights)
    return float(total)
