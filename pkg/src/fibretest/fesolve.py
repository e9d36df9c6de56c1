"""Plane-strain elastic-plastic FE solver on a structured quadrilateral grid.

Small-strain, quasi-static, implicit. Fibres are linear elastic; the matrix
follows J2 (von Mises) plasticity with piecewise-linear isotropic hardening
integrated by radial return.

Conventions, fixed throughout:
  * Units: lengths um, stresses MPa, unit out-of-plane thickness; forces uN.
    MaterialModel stores Young's modulus in GPa and is converted on entry.
  * Voigt order (eps_yy, eps_zz, eps_xx, gamma_yz) with engineering shear
    for strain vectors; stress vectors are (sig_yy, sig_zz, sig_xx, tau_yz).
    Plane strain: eps_xx = 0 always, sig_xx is tracked.
  * GaussPointState stores the plastic strain 4th component as the tensor
    component eps_p_yz (= gamma_p_yz / 2), not engineering shear.
  * Mesh axes: y vertical (index iy), z horizontal (index iz); node id is
    iy*(nz+1)+iz, dofs are (2n, 2n+1) = (u_y, u_z).

The constrained tangent system is symmetric positive definite and banded in
the natural node ordering; it is solved by a banded Cholesky factorization.
A purely elastic iterate reuses one cached factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .microgen import Microstructure

MATRIX_PHASE = 0
FIBRE_PHASE = 1

NEWTON_REL_TOL = 1e-6
NEWTON_ABS_TOL = 1e-10
NEWTON_MAX_ITER = 20

_M = np.array([1.0, 1.0, 1.0, 0.0])
# Deviatoric projector in engineering-shear Voigt form.
_IDEV = np.diag([1.0, 1.0, 1.0, 0.5]) - np.outer(_M, _M) / 3.0


class ResolutionError(ValueError):
    """Mesh too coarse for the requested element size."""


class NonConvergenceError(RuntimeError):
    """Newton loop exhausted its iteration budget; caller should cut back."""

    def __init__(self, residuals):
        super().__init__(f"no convergence in {len(residuals) - 1} iterations")
        self.residuals = residuals


class SingularSystemError(RuntimeError):
    """Constrained stiffness is not positive definite (check constraints)."""


class NumericalFailureError(RuntimeError):
    """Non-finite entries during assembly."""

    def __init__(self, element_id: int):
        super().__init__(f"non-finite assembly contribution in element {element_id}")
        self.element_id = element_id


@dataclass(frozen=True)
class MaterialModel:
    """Isotropic phase material.

    Parameters
    ----------
    youngs_modulus : float
        E in GPa.
    poisson_ratio : float
        nu, in [0, 0.5).
    hardening_table : tuple of (float, float)
        (equivalent plastic strain, flow stress MPa) knots, strictly
        increasing in strain, non-decreasing in stress, first knot at
        strain 0. Empty means purely elastic.
    """

    youngs_modulus: float
    poisson_ratio: float
    hardening_table: tuple = ()

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValueError(f"E must be positive, got {self.youngs_modulus}")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ValueError(f"nu must be in [0, 0.5), got {self.poisson_ratio}")
        tab = tuple((float(e), float(s)) for e, s in self.hardening_table)
        object.__setattr__(self, "hardening_table", tab)
        if tab:
            if tab[0][0] != 0.0:
                raise ValueError("first hardening knot must be at plastic strain 0")
            e = [k[0] for k in tab]
            s = [k[1] for k in tab]
            if any(b <= a for a, b in zip(e, e[1:])):
                raise ValueError("hardening strains must be strictly increasing")
            if any(b < a for a, b in zip(s, s[1:])):
                raise ValueError("flow stress must be non-decreasing")
            if s[0] <= 0:
                raise ValueError("initial yield stress must be positive")

    @property
    def is_elastic(self) -> bool:
        return not self.hardening_table


class _MatParams:
    """Precomputed per-material solver constants (MPa units)."""

    def __init__(self, mat: MaterialModel):
        E = mat.youngs_modulus * 1000.0
        nu = mat.poisson_ratio
        self.G = E / (2.0 * (1.0 + nu))
        self.lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        self.C = self.lam * np.outer(_M, _M) + 2.0 * self.G * np.diag([1.0, 1.0, 1.0, 0.5])
        self.elastic = mat.is_elastic
        if not self.elastic:
            tab = np.array(mat.hardening_table, dtype=float)
            self.e_knots = tab[:, 0]
            self.s_knots = tab[:, 1]
            if len(tab) > 1:
                self.H_last = (self.s_knots[-1] - self.s_knots[-2]) / (self.e_knots[-1] - self.e_knots[-2])
            else:
                self.H_last = 0.0

    def flow(self, ebar):
        """Flow stress at equivalent plastic strain, extrapolating the last slope."""
        ebar = np.asarray(ebar, dtype=float)
        s = np.interp(ebar, self.e_knots, self.s_knots)
        over = ebar > self.e_knots[-1]
        if np.any(over):
            s = np.where(over, self.s_knots[-1] + self.H_last * (ebar - self.e_knots[-1]), s)
        return s


def elastic_tangent(mat: MaterialModel) -> np.ndarray:
    """Plane-strain isotropic stiffness, 4x4 in MPa.

    Basis (eps_yy, eps_zz, eps_xx, gamma_yz); the eps_xx row is carried so
    the out-of-plane stress is available even though eps_xx = 0.
    """
    return _MatParams(mat).C.copy()


@dataclass
class GaussPointState:
    """History at one integration point.

    plastic_strain holds tensor components (e_yy, e_zz, e_xx, e_yz); its
    trace is zero for J2 flow. stress is the committed Voigt stress (MPa).
    extrapolated flags a flow-curve evaluation beyond the last table knot.
    """

    plastic_strain: np.ndarray = field(default_factory=lambda: np.zeros(4))
    equivalent_plastic_strain: float = 0.0
    stress: np.ndarray = field(default_factory=lambda: np.zeros(4))
    extrapolated: bool = False


def _radial_return(sig_tr: np.ndarray, ebar: np.ndarray, mp: _MatParams):
    """Radial return for a batch of points of one material.

    Parameters are trial stresses (n, 4) and equivalent plastic strains
    (n,). Returns (sig_new, dgamma, N, H, tangents, extrapolated) where N
    is the deviatoric flow direction scaled by 3/2 (tensor components) and
    tangents is (n, 4, 4) consistent algorithmic moduli.
    """
    n = sig_tr.shape[0]
    D = np.broadcast_to(mp.C, (n, 4, 4)).copy()
    if mp.elastic:
        z = np.zeros(n)
        return sig_tr.copy(), z, np.zeros((n, 4)), z, D, np.zeros(n, dtype=bool)

    p = sig_tr[:, :3].sum(axis=1) / 3.0
    s = sig_tr.copy()
    s[:, :3] -= p[:, None]
    snorm2 = s[:, 0] ** 2 + s[:, 1] ** 2 + s[:, 2] ** 2 + 2.0 * s[:, 3] ** 2
    q_tr = np.sqrt(1.5 * snorm2)
    sy = mp.flow(ebar)
    plastic = q_tr > sy * (1.0 + 1e-12)

    sig_new = sig_tr.copy()
    dgamma = np.zeros(n)
    Nf = np.zeros((n, 4))
    H = np.zeros(n)
    extrap = np.zeros(n, dtype=bool)
    if not np.any(plastic):
        return sig_new, dgamma, Nf, H, D, extrap

    idxp = np.where(plastic)[0]
    eb = ebar[idxp]
    qt = q_tr[idxp]
    G3 = 3.0 * mp.G

    # Exact solve of q_tr - 3G*dg = flow(eb + dg) on the piecewise-linear
    # curve: evaluate the residual at every knot at or beyond eb, pick the
    # last knot where it is still positive, then solve linearly on that
    # segment (or on the extrapolation ray past the final knot).
    ek = np.maximum(mp.e_knots[None, :], eb[:, None])
    sk = mp.flow(ek)
    phi = qt[:, None] - G3 * (ek - eb[:, None]) - sk
    seg = np.sum(phi > 0.0, axis=1) - 1
    nk = len(mp.e_knots)
    slopes = np.empty(nk)
    slopes[:-1] = np.diff(mp.s_knots) / np.diff(mp.e_knots)
    slopes[-1] = mp.H_last
    Hp = slopes[seg]
    rows = np.arange(len(idxp))
    dg = (ek[rows, seg] - eb) + phi[rows, seg] / (G3 + Hp)

    sdev = s[idxp]
    Np = 1.5 * sdev / qt[:, None]
    sig_new[idxp] = sig_tr[idxp] - (2.0 * mp.G * dg)[:, None] * Np
    dgamma[idxp] = dg
    Nf[idxp] = Np
    H[idxp] = Hp
    extrap[idxp] = (eb + dg) > mp.e_knots[-1]

    # Consistent tangent: C_e - a*Idev - b*(s_hat s_hat^T), engineering
    # Voigt throughout (the outer-product form pairs tau with gamma).
    a = 6.0 * mp.G ** 2 * dg / qt
    b = 6.0 * mp.G ** 2 * (1.0 / (G3 + Hp) - dg / qt)
    shat = sdev / np.sqrt(snorm2[idxp])[:, None]
    D[idxp] -= a[:, None, None] * _IDEV[None, :, :]
    D[idxp] -= b[:, None, None] * (shat[:, :, None] * shat[:, None, :])
    return sig_new, dgamma, Nf, H, D, extrap


def return_map(state: GaussPointState, strain_increment: np.ndarray, mat: MaterialModel):
    """Advance one Gauss point by a strain increment.

    Parameters
    ----------
    state : GaussPointState
        Committed state.
    strain_increment : array (4,)
        Engineering-shear Voigt strain increment (eps_yy, eps_zz, eps_xx,
        gamma_yz); eps_xx must be 0 under plane strain.
    mat : MaterialModel

    Returns
    -------
    (GaussPointState, ndarray)
        New state and the 4x4 consistent algorithmic tangent in MPa.
    """
    mp = _MatParams(mat)
    deps = np.asarray(strain_increment, dtype=float)
    sig_tr = (state.stress + mp.C @ deps)[None, :]
    sig, dg, N, _H, D, extrap = _radial_return(sig_tr, np.array([state.equivalent_plastic_strain]), mp)
    new = GaussPointState(
        plastic_strain=state.plastic_strain + dg[0] * N[0],
        equivalent_plastic_strain=state.equivalent_plastic_strain + dg[0],
        stress=sig[0],
        extrapolated=bool(extrap[0]),
    )
    return new, D[0]


@dataclass
class Mesh:
    """Structured quad grid over the square domain.

    nx counts elements along y, nz along z; connectivity is
    counter-clockwise (z right, y up). element_phase holds MATRIX_PHASE or
    FIBRE_PHASE per element.
    """

    nx: int
    nz: int
    element_size: float
    node_coords: np.ndarray
    connectivity: np.ndarray
    element_phase: np.ndarray

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.nz + 1)

    @property
    def n_elements(self) -> int:
        return self.nx * self.nz

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def domain_size(self) -> float:
        return self.nx * self.element_size

    def element_dofs(self) -> np.ndarray:
        """(n_elements, 8) dof ids in (uy0, uz0, ..., uy3, uz3) order."""
        d = np.empty((self.n_elements, 8), dtype=np.int64)
        d[:, 0::2] = 2 * self.connectivity
        d[:, 1::2] = 2 * self.connectivity + 1
        return d


def build_mesh(ms: Microstructure, target_element_size: float) -> Mesh:
    """Voxel mesh of the microstructure domain.

    Element count per side is round(h_c / target_element_size); the phase
    of each element is decided by whether its centroid falls inside a
    fibre disc.
    """
    if target_element_size <= 0:
        raise ValueError("target_element_size must be positive")
    h_c = ms.domain_size
    n = round(h_c / target_element_size)
    if n < 8:
        raise ResolutionError(f"element size {target_element_size} gives {n} elements per side; need >= 8")
    h = h_c / n
    iy, iz = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    coords = np.stack([(iy * h).ravel(), (iz * h).ravel()], axis=1)

    ei, ej = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    n0 = (ei * (n + 1) + ej).ravel()
    conn = np.stack([n0, n0 + 1, n0 + n + 2, n0 + n + 1], axis=1)

    phase = np.zeros(n * n, dtype=np.uint8)
    cy = (ei.ravel() + 0.5) * h
    cz = (ej.ravel() + 0.5) * h
    for f in ms.fibres:
        d2 = (cy - f.center_y) ** 2 + (cz - f.center_z) ** 2
        phase[d2 <= f.radius * f.radius] = FIBRE_PHASE
    return Mesh(nx=n, nz=n, element_size=h, node_coords=coords, connectivity=conn, element_phase=phase)


def _quad_B(h: float) -> np.ndarray:
    """Mean-dilatation B matrices at the 2x2 Gauss points of a square element.

    Returns (4, 4, 8): gp index, strain row, dof column. Identical for all
    elements of the structured grid.

    The volumetric part of each B matrix is replaced by its element average
    (the classic B-bar construction, equivalent to Abaqus CPE4). Bilinear
    quads integrated fully lock under nearly isochoric deformation, and J2
    plastic flow is exactly isochoric, so without this the post-yield
    response stiffens artificially. The correction spreads the averaged
    dilatation over all three normal strain rows; it sums to zero across
    the Gauss points, so constant-strain states and patch tests are
    unaffected.
    """
    g = 1.0 / math.sqrt(3.0)
    Bs = np.zeros((4, 4, 8))
    k = 0
    for eta in (-g, g):
        for xi in (-g, g):
            dN_dxi = np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)]) / 4.0
            dN_deta = np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)]) / 4.0
            dN_dz = dN_dxi * 2.0 / h
            dN_dy = dN_deta * 2.0 / h
            for a in range(4):
                Bs[k, 0, 2 * a] = dN_dy[a]
                Bs[k, 1, 2 * a + 1] = dN_dz[a]
                Bs[k, 3, 2 * a] = dN_dz[a]
                Bs[k, 3, 2 * a + 1] = dN_dy[a]
            k += 1
    b_y = Bs[:, 0, 0::2].copy()
    b_z = Bs[:, 1, 1::2].copy()
    corr_y = (b_y.mean(axis=0) - b_y) / 3.0
    corr_z = (b_z.mean(axis=0) - b_z) / 3.0
    for row in range(3):
        Bs[:, row, 0::2] += corr_y
        Bs[:, row, 1::2] += corr_z
    return Bs


@dataclass
class FieldState:
    """Committed history for every Gauss point, stored flat (n_elem*4, .).

    sigma is the committed Voigt stress; eps is the committed engineering
    total strain; eps_p holds plastic strain tensor components.
    """

    sigma: np.ndarray
    eps: np.ndarray
    eps_p: np.ndarray
    ebar: np.ndarray

    @classmethod
    def zeros(cls, n_elements: int) -> "FieldState":
        n = n_elements * 4
        return cls(np.zeros((n, 4)), np.zeros((n, 4)), np.zeros((n, 4)), np.zeros(n))

    def copy(self) -> "FieldState":
        return FieldState(self.sigma.copy(), self.eps.copy(), self.eps_p.copy(), self.ebar.copy())


class _Evaluation:
    """One constitutive sweep at a displacement iterate."""

    __slots__ = ("f_int", "sigma", "eps", "eps_p", "ebar", "D", "any_plastic", "n_extrapolated")


def _gp_strains(Bs: np.ndarray, u_e: np.ndarray) -> np.ndarray:
    # (n_elem, 8) element displacements -> (n_elem*4, 4) gp strains
    eps = np.einsum("gij,ej->egi", Bs, u_e)
    return eps.reshape(-1, 4)


def _evaluate(mesh: Mesh, states: FieldState, u: np.ndarray, mats, Bs, w, edofs) -> _Evaluation:
    """Strains, stress update, consistent tangents and internal forces at u."""
    u_e = u[edofs]
    eps = _gp_strains(Bs, u_e)
    deps = eps - states.eps

    n_gp = eps.shape[0]
    sig = np.empty((n_gp, 4))
    D = np.empty((n_gp, 4, 4))
    eps_p = states.eps_p.copy()
    ebar = states.ebar.copy()
    any_plastic = False
    n_extrap = 0
    gp_phase = np.repeat(mesh.element_phase, 4)
    for phase, mp in mats.items():
        sel = np.where(gp_phase == phase)[0]
        if sel.size == 0:
            continue
        sig_tr = states.sigma[sel] + deps[sel] @ mp.C.T
        s_new, dg, N, _H, Dp, extrap = _radial_return(sig_tr, states.ebar[sel], mp)
        sig[sel] = s_new
        D[sel] = Dp
        if np.any(dg > 0):
            any_plastic = True
            eps_p[sel] += dg[:, None] * N
            ebar[sel] += dg
            n_extrap += int(np.count_nonzero(extrap))

    sig_e = sig.reshape(-1, 4, 4)
    f_e = np.einsum("gij,egi->ej", Bs, sig_e) * w
    if not np.all(np.isfinite(f_e)):
        bad = int(np.where(~np.isfinite(f_e).all(axis=1))[0][0])
        raise NumericalFailureError(bad)
    f_int = np.zeros(u.shape[0])
    np.add.at(f_int, edofs.ravel(), f_e.ravel())

    ev = _Evaluation()
    ev.f_int = f_int
    ev.sigma = sig
    ev.eps = eps
    ev.eps_p = eps_p
    ev.ebar = ebar
    ev.D = D
    ev.any_plastic = any_plastic
    ev.n_extrapolated = n_extrap
    return ev


def _element_stiffness(D: np.ndarray, Bs: np.ndarray, w: float) -> np.ndarray:
    De = D.reshape(-1, 4, 4, 4)  # (n_elem, gp, 4, 4)
    ke = np.zeros((De.shape[0], 8, 8))
    for g in range(4):
        ke += Bs[g].T @ (De[:, g] @ Bs[g])
    return ke * w


def _materials_for(mesh: Mesh, matrix: MaterialModel, fibre: MaterialModel) -> dict:
    return {MATRIX_PHASE: _MatParams(matrix), FIBRE_PHASE: _MatParams(fibre)}


def assemble(mesh: Mesh, states: FieldState, u: np.ndarray, matrix: MaterialModel, fibre: MaterialModel):
    """Residual and tangent stiffness at displacement u.

    Returns (residual, K) with residual = -internal forces (no external
    loads; loading enters through prescribed displacements) and K as a CSR
    matrix over all dofs, constraints not applied.
    """
    import scipy.sparse as sp

    if u.shape[0] != mesh.n_dofs:
        raise ValueError(f"u has {u.shape[0]} entries, mesh has {mesh.n_dofs} dofs")
    Bs = _quad_B(mesh.element_size)
    w = (mesh.element_size / 2.0) ** 2
    edofs = mesh.element_dofs()
    mats = _materials_for(mesh, matrix, fibre)
    ev = _evaluate(mesh, states, u, mats, Bs, w, edofs)
    ke = _element_stiffness(ev.D, Bs, w)
    if not np.all(np.isfinite(ke)):
        bad = int(np.where(~np.isfinite(ke.reshape(len(ke), -1)).all(axis=1))[0][0])
        raise NumericalFailureError(bad)
    rows = np.repeat(edofs, 8, axis=1).ravel()
    cols = np.tile(edofs, (1, 8)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs)).tocsr()
    return -ev.f_int, K


@dataclass
class DofSystem:
    """Displacement vector plus constraint map.

    fixed marks prescribed dofs; prescribed holds their target values
    (total, not incremental). Free dofs are solved for.
    """

    u: np.ndarray
    fixed: np.ndarray
    prescribed: np.ndarray

    @classmethod
    def for_mesh(cls, mesh: Mesh) -> "DofSystem":
        n = mesh.n_dofs
        return cls(np.zeros(n), np.zeros(n, dtype=bool), np.zeros(n))

    def prescribe(self, dof: int, value: float) -> None:
        self.fixed[dof] = True
        self.prescribed[dof] = value


class _Workspace:
    """Cached geometry/scatter data for repeated solves on one mesh+BC set."""

    def __init__(self, mesh: Mesh, fixed: np.ndarray):
        self.Bs = _quad_B(mesh.element_size)
        self.w = (mesh.element_size / 2.0) ** 2
        self.edofs = mesh.element_dofs()
        self.fixed = fixed.copy()
        self.free = ~fixed
        ndof = mesh.n_dofs
        self.ndof = ndof
        self.bw = 2 * (mesh.nz + 2) + 1

        # Flat destinations in the upper-banded array for every element
        # stiffness entry that lands on free rows and columns of the upper
        # triangle; fixed dofs get a unit diagonal instead.
        gi = np.repeat(self.edofs, 8, axis=1).ravel()
        gj = np.tile(self.edofs, (1, 8)).ravel()
        keep = (gj >= gi) & ~fixed[gi] & ~fixed[gj]
        self.keep = keep
        self.band_idx = (self.bw - (gj[keep] - gi[keep])) * ndof + gj[keep]
        self.elastic_factor = None

    def factorize(self, ke: np.ndarray):
        ab = np.zeros((self.bw + 1, self.ndof))
        np.add.at(ab.ravel(), self.band_idx, ke.ravel()[self.keep])
        ab[self.bw, self.fixed] = 1.0
        try:
            return sla.cholesky_banded(ab, lower=False, check_finite=False)
        except sla.LinAlgError as exc:
            raise SingularSystemError(
                "constrained stiffness is not positive definite; boundary conditions "
                "may leave rigid-body modes free"
            ) from exc


@dataclass
class SolveInfo:
    """Newton loop record for one increment."""

    n_iterations: int
    residuals: list
    n_extrapolated: int


def solve_increment(system: DofSystem, mesh: Mesh, states: FieldState,
                    matrix: MaterialModel, fibre: MaterialModel,
                    workspace: _Workspace | None = None,
                    predictor: np.ndarray | None = None) -> SolveInfo:
    """Equilibrate at the currently prescribed boundary values.

    Starts from system.u (or the supplied predictor), drives the change in
    prescribed displacements through the first tangent solve, then iterates
    Newton-Raphson on the free dofs. On convergence the Gauss point states
    and the displacement are committed in place. Raises
    NonConvergenceError after NEWTON_MAX_ITER solves so the caller can cut
    the increment back; nothing is committed in that case.
    """
    if not np.any(system.fixed):
        raise SingularSystemError("no prescribed dofs; the static problem has rigid-body modes")
    ws = workspace if workspace is not None else _Workspace(mesh, system.fixed)
    mats = _materials_for(mesh, matrix, fibre)
    u = predictor.copy() if predictor is not None else system.u.copy()

    # Outstanding prescribed-displacement change, applied together with the
    # first correction. Evaluating at the pre-jump state keeps the first
    # tangent consistent with the committed stresses.
    dv = np.zeros_like(u)
    dv[ws.fixed] = system.prescribed[ws.fixed] - u[ws.fixed]
    driving = bool(np.any(dv != 0.0))

    residuals = []
    ref = None
    for n_solves in range(NEWTON_MAX_ITER + 1):
        ev = _evaluate(mesh, states, u, mats, ws.Bs, ws.w, ws.edofs)
        r = -ev.f_int
        ke = None
        if driving and n_solves == 0:
            ke = _element_stiffness(ev.D, ws.Bs, ws.w)
            f_drive = np.zeros_like(u)
            fd_e = (ke @ dv[ws.edofs][:, :, None])[:, :, 0]
            np.add.at(f_drive, ws.edofs.ravel(), fd_e.ravel())
            r -= f_drive
        r[ws.fixed] = 0.0
        rn = float(np.linalg.norm(r))
        residuals.append(rn)
        if ref is None:
            # Reference scale: the initial imbalance or, when a predictor
            # starts near equilibrium, the reaction-force magnitude, so the
            # relative test never chases below 1e-6 of the physical load.
            ref = max(rn, float(np.linalg.norm(ev.f_int[ws.fixed])))
        if rn <= NEWTON_REL_TOL * ref or rn <= NEWTON_ABS_TOL:
            states.sigma = ev.sigma
            states.eps = ev.eps
            states.eps_p = ev.eps_p
            states.ebar = ev.ebar
            system.u = u
            return SolveInfo(n_iterations=n_solves, residuals=residuals,
                             n_extrapolated=ev.n_extrapolated)
        if n_solves == NEWTON_MAX_ITER:
            break
        if ev.any_plastic:
            if ke is None:
                ke = _element_stiffness(ev.D, ws.Bs, ws.w)
            factor = ws.factorize(ke)
        else:
            if ws.elastic_factor is None:
                if ke is None:
                    ke = _element_stiffness(ev.D, ws.Bs, ws.w)
                ws.elastic_factor = ws.factorize(ke)
            factor = ws.elastic_factor
        du = sla.cho_solve_banded((factor, False), r, check_finite=False)
        u[ws.free] += du[ws.free]
        if n_solves == 0:
            u[ws.fixed] += dv[ws.fixed]
    raise NonConvergenceError(residuals)
