"""Virtual transverse-tension test: boundary conditions, load schedule,
homogenized stress-strain curve, and property extraction.

The specimen is loaded along z by a prescribed displacement on the edge
z = h_c, with u_z = 0 on z = 0 and u_y = 0 on y = 0. The homogenized
stress is the summed z-reaction on the loaded edge divided by the edge
area (unit thickness); strain is the applied displacement over h_c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fesolve import (
    DofSystem,
    FieldState,
    MaterialModel,
    Mesh,
    NonConvergenceError,
    _quad_B,
    _Workspace,
    build_mesh,
    solve_increment,
)
from .microgen import Microstructure, volume_fraction

MAX_CUTBACKS = 4
PROOF_STRESS_OFFSET = 0.002


class NotYieldedError(RuntimeError):
    """Stress-strain curve never crosses the offset line within max_strain."""


class SolverAbortError(RuntimeError):
    """Increment failed to converge even after the cutback budget."""

    def __init__(self, increment: int, strain: float):
        super().__init__(f"solver aborted at increment {increment} (strain {strain:.4g}) after {MAX_CUTBACKS} cutbacks")
        self.increment = increment
        self.strain = strain


@dataclass(frozen=True)
class TensileTestConfig:
    """Load schedule and meshing for one virtual test.

    element size is element_size_factor times the mean fibre radius.
    """

    max_strain: float = 0.04
    n_increments: int = 40
    element_size_factor: float = 1.0

    def __post_init__(self):
        if not self.max_strain > 0:
            raise ValueError(f"max_strain must be positive, got {self.max_strain}")
        if self.n_increments < 10:
            raise ValueError(f"n_increments must be >= 10, got {self.n_increments}")
        if not self.element_size_factor > 0:
            raise ValueError("element_size_factor must be positive")


@dataclass
class StressStrainCurve:
    """Homogenized response; points are (strain, stress MPa) from (0, 0)."""

    points: list

    def strains(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    def stresses(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


@dataclass
class IncrementRecord:
    increment: int
    applied_strain: float
    reaction_force: float
    newton_iterations: int
    cutbacks: int = 0
    extrapolated_points: int = 0


@dataclass
class TestResult:
    curve: StressStrainCurve
    youngs_modulus: float
    yield_strength: float
    vf_actual: float
    solver_log: list = field(default_factory=list)

    @property
    def total_newton_iterations(self) -> int:
        return sum(r.newton_iterations for r in self.solver_log)


def boundary_dof_sets(mesh: Mesh):
    """(bottom u_y, left u_z, right u_z) dof index arrays."""
    nz = mesh.nz
    iy, iz = np.meshgrid(np.arange(mesh.nx + 1), np.arange(nz + 1), indexing="ij")
    nid = iy * (nz + 1) + iz
    bottom_uy = 2 * nid[iy == 0]
    left_uz = 2 * nid[iz == 0] + 1
    right_uz = 2 * nid[iz == nz] + 1
    return bottom_uy, left_uz, right_uz


def apply_boundary_conditions(mesh: Mesh, applied_strain: float) -> DofSystem:
    """Transverse-tension constraints at a given applied strain.

    u_z = applied_strain * h_c on the edge z = h_c, u_z = 0 on z = 0,
    u_y = 0 on y = 0; everything else is free.
    """
    system = DofSystem.for_mesh(mesh)
    bottom_uy, left_uz, right_uz = boundary_dof_sets(mesh)
    system.fixed[bottom_uy] = True
    system.fixed[left_uz] = True
    system.fixed[right_uz] = True
    system.prescribed[right_uz] = applied_strain * mesh.domain_size
    return system


def internal_force_vector(mesh: Mesh, states: FieldState) -> np.ndarray:
    """Assemble nodal internal forces from committed Gauss point stresses."""
    Bs = _quad_B(mesh.element_size)
    w = (mesh.element_size / 2.0) ** 2
    sig_e = states.sigma.reshape(-1, 4, 4)
    f_e = np.einsum("gij,egi->ej", Bs, sig_e) * w
    f = np.zeros(mesh.n_dofs)
    np.add.at(f, mesh.element_dofs().ravel(), f_e.ravel())
    return f


def run_tensile_test(
    ms: Microstructure,
    matrix: MaterialModel,
    fibre: MaterialModel,
    cfg: TensileTestConfig = TensileTestConfig(),
) -> TestResult:
    """Mesh the microstructure and ramp the transverse displacement.

    The strain schedule is linear over n_increments; a non-converged
    increment is retried at half the step, up to MAX_CUTBACKS halvings,
    and recorded points stay on the nominal schedule. Raises
    SolverAbortError or NotYieldedError on failure; callers record the
    sample status rather than losing the sample.
    """
    mesh = build_mesh(ms, cfg.element_size_factor * ms.mean_radius)
    states = FieldState.zeros(mesh.n_elements)
    system = apply_boundary_conditions(mesh, 0.0)
    ws = _Workspace(mesh, system.fixed)
    _, _, right_uz = boundary_dof_sets(mesh)
    h_c = mesh.domain_size
    area = h_c * 1.0

    d_eps = cfg.max_strain / cfg.n_increments
    points = [(0.0, 0.0)]
    log = []
    strain = 0.0
    prev = None  # (strain, u) of the increment before last, for the predictor
    last = (0.0, system.u.copy())
    for inc in range(1, cfg.n_increments + 1):
        target = inc * d_eps
        step = target - strain
        cutbacks = 0
        iters = 0
        extrap = 0
        while strain < target - 1e-15:
            trial = min(strain + step, target)
            system.prescribed[right_uz] = trial * h_c
            predictor = None
            if cutbacks == 0 and prev is not None and last[0] > prev[0]:
                # Secant extrapolation of the last two converged states;
                # exact in the elastic phase, a near-solution start after.
                scale = (trial - last[0]) / (last[0] - prev[0])
                predictor = last[1] + scale * (last[1] - prev[1])
            try:
                info = solve_increment(system, mesh, states, matrix, fibre,
                                       workspace=ws, predictor=predictor)
            except NonConvergenceError:
                cutbacks += 1
                if cutbacks > MAX_CUTBACKS:
                    raise SolverAbortError(inc, trial)
                step /= 2.0
                continue
            prev = last
            last = (trial, system.u.copy())
            strain = trial
            iters += info.n_iterations
            extrap += info.n_extrapolated
        reaction = float(np.sum(internal_force_vector(mesh, states)[right_uz]))
        points.append((strain, reaction / area))
        log.append(IncrementRecord(inc, strain, reaction, iters, cutbacks, extrap))

    curve = StressStrainCurve(points)
    e_c = extract_youngs_modulus(curve)
    try:
        sigma_y = extract_proof_stress(curve, e_c)
    except NotYieldedError as exc:
        # Attach the partial result so callers can still record E_c.
        exc.curve = curve
        exc.youngs_modulus = e_c
        exc.vf_actual = volume_fraction(ms)
        exc.solver_log = log
        exc.total_newton_iterations = sum(r.newton_iterations for r in log)
        raise
    return TestResult(
        curve=curve,
        youngs_modulus=e_c,
        yield_strength=sigma_y,
        vf_actual=volume_fraction(ms),
        solver_log=log,
    )


def extract_youngs_modulus(curve: StressStrainCurve) -> float:
    """Initial slope from the first increment, in GPa."""
    if len(curve.points) < 2:
        raise ValueError("curve needs at least two points")
    eps1, sig1 = curve.points[1]
    if eps1 <= 0:
        raise ValueError(f"first increment strain must be positive, got {eps1}")
    return (sig1 / eps1) / 1000.0


def extract_proof_stress(curve: StressStrainCurve, youngs_modulus: float,
                         offset: float = PROOF_STRESS_OFFSET) -> float:
    """Stress at the intersection with the offset elastic line, in MPa.

    The offset line is sigma = E*(eps - offset); both the curve and the
    line are treated piecewise linearly. Raises NotYieldedError if the
    curve stays above the line to its end.
    """
    if len(curve.points) < 2:
        raise ValueError("curve needs at least two points")
    slope = youngs_modulus * 1000.0
    eps = curve.strains()
    sig = curve.stresses()
    diff = sig - slope * (eps - offset)
    for k in range(len(eps) - 1):
        if diff[k] > 0.0 >= diff[k + 1]:
            t = diff[k] / (diff[k] - diff[k + 1])
            return float(sig[k] + t * (sig[k + 1] - sig[k]))
    raise NotYieldedError(
        f"no intersection with the {offset:.1%} offset line up to strain {eps[-1]:.4g}"
    )
