"""Dyadic Green tensors and a coupled-dipole solver for voxelized scenes.

The electric field radiated by a polarization density P at frequency w obeys

    curl curl E - (w^2/c^2) eps(x,w) E = (w^2/c^2) P,

so E(x) = (w^2/c^2) integral G(x,x',w) P(x') dx' with G the dyadic Green
tensor of the scene.  For a uniform medium of permittivity eps_b the tensor
is known in closed form; an inhomogeneous scene made of cubic voxels with
permittivity contrast is handled by the coupled-dipole discretization of the
volume integral equation

    G = G_b + (w^2/c^2) integral G_b (eps - eps_b) G,

in which every voxel becomes a point dipole with a Clausius-Mossotti
polarizability carrying the radiative self-reaction correction.

Units: hbar = c = 1; lengths in scene units, frequencies in inverse lengths.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import bicgstab

from .errors import SolverError
from .materials import PermittivityModel, eval_permittivity

# Dense factorization is used up to this many scalar unknowns (3 per voxel);
# larger systems go through BiCGSTAB.
DENSE_SOLVE_MAX_UNKNOWNS = 1500
SOLVER_MAX_ITERATIONS = 10_000
_DEFAULT_SOLVER_TOL = 1e-10

_I3 = np.eye(3)


def solver_tolerance():
    """Relative residual target for the linear solver (env: PLDOS_SOLVER_TOL)."""
    return float(os.environ.get("PLDOS_SOLVER_TOL", _DEFAULT_SOLVER_TOL))


def _principal_sqrt(z):
    """Principal square root with Re >= 0; on the cut (Re = 0) take Im >= 0."""
    z = complex(z)
    if z.imag == 0.0:
        z = complex(z.real, 0.0)  # scrub -0.0, which would flip the cut side
    return complex(np.sqrt(z))


def _dyadic(rvec, k):
    """Closed-form dyadic e^{ikR}/(4 pi R) [(1 + (ikR-1)/(kR)^2) I
    + (3 - 3ikR - (kR)^2)/(kR)^2 RR] for wavenumber k and separation rvec."""
    r = float(np.linalg.norm(rvec))
    if r == 0.0:
        raise ValueError(
            "coincident points: the tensor diverges; use "
            "im_green_coincident_homogeneous for the imaginary part"
        )
    if k == 0.0:
        raise ValueError("zero wavenumber: evaluate at a small finite frequency")
    rhat = np.asarray(rvec, dtype=float) / r
    kr = k * r
    kr2 = kr * kr
    scalar = np.exp(1j * kr) / (4.0 * np.pi * r)
    a = 1.0 + (1j * kr - 1.0) / kr2
    b = (3.0 - 3j * kr - kr2) / kr2
    out = scalar * (a * _I3 + b * np.outer(rhat, rhat))
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite Green tensor entries")
    return out


def green_vacuum(x, xp, omega):
    """Vacuum dyadic Green tensor G_v(x, xp, omega); omega may be complex
    with Im >= 0 (retarded branch)."""
    omega = complex(omega)
    if omega.imag < 0.0:
        raise ValueError("omega must have Im >= 0")
    if omega.imag == 0.0:
        omega = omega.real
    return _dyadic(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float), omega)


def green_homogeneous(x, xp, omega, eps_b):
    """Dyadic Green tensor of a uniform medium with permittivity eps_b.

    Identical to the vacuum tensor with k = omega * sqrt(eps_b); the
    longitudinal near-field term then carries the required 1/eps_b weight.
    """
    omega = complex(omega)
    if omega.imag < 0.0:
        raise ValueError("omega must have Im >= 0")
    k = omega * _principal_sqrt(eps_b)
    if k.imag == 0.0:
        k = k.real
    return _dyadic(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float), k)


def im_green_coincident_homogeneous(omega, eps_b):
    """Imaginary part of the uniform-medium tensor at coincident points:
    (omega / 6 pi) Re[sqrt(eps_b)] I.  Unlike the full tensor this limit is
    finite and regularization independent."""
    omega = float(omega)
    if omega <= 0.0:
        raise ValueError("omega must be > 0")
    return (omega / (6.0 * np.pi)) * _principal_sqrt(eps_b).real * _I3.copy()


def _pairwise_dyadic(pos_a, pos_b, k, *, zero_diagonal=False):
    """Dyadic blocks G(a_i, b_j) for all pairs, shape (M, N, 3, 3).

    With zero_diagonal the i == j blocks are set to zero (self-interaction
    handled through the polarizability instead).
    """
    pos_a = np.atleast_2d(np.asarray(pos_a, dtype=float))
    pos_b = np.atleast_2d(np.asarray(pos_b, dtype=float))
    rvec = pos_a[:, None, :] - pos_b[None, :, :]
    r = np.linalg.norm(rvec, axis=2)
    mask = None
    if zero_diagonal:
        mask = r == 0.0
        r = np.where(mask, 1.0, r)
    elif np.any(r == 0.0):
        raise ValueError("coincident points in pairwise Green evaluation")
    rhat = rvec / r[:, :, None]
    kr = k * r
    kr2 = kr * kr
    scalar = np.exp(1j * kr) / (4.0 * np.pi * r)
    a = scalar * (1.0 + (1j * kr - 1.0) / kr2)
    b = scalar * (3.0 - 3j * kr - kr2) / kr2
    out = a[:, :, None, None] * _I3 + b[:, :, None, None] * (
        rhat[:, :, :, None] * rhat[:, :, None, :]
    )
    if mask is not None and mask.any():
        out[mask] = 0.0
    return out


@dataclass(frozen=True)
class Voxel:
    """One cubic cell of a scatterer, centered on a regular grid."""

    center: tuple
    material: PermittivityModel

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        if len(center) != 3:
            raise ValueError("voxel center must have 3 components")
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class Scene:
    """Uniform background plus voxelized scatterers; immutable once built."""

    background: PermittivityModel = PermittivityModel()
    voxels: tuple = ()
    voxel_pitch: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "voxels", tuple(self.voxels))
        if not self.voxel_pitch > 0.0:
            raise ValueError("voxel_pitch must be > 0")
        if not self.voxels:
            return
        centers = self.positions()
        offsets = (centers - centers[0]) / self.voxel_pitch
        if not np.allclose(offsets, np.round(offsets), atol=1e-9):
            raise ValueError("voxel centers must lie on a grid of spacing voxel_pitch")
        keys = {tuple(int(v) for v in row) for row in np.round(offsets)}
        if len(keys) != len(self.voxels):
            raise ValueError("duplicate voxel centers")

    def positions(self):
        """Voxel centers as an (N, 3) array."""
        return np.array([v.center for v in self.voxels], dtype=float)

    def contains(self, point):
        """True if the point lies inside (or on the face of) any voxel cube."""
        if not self.voxels:
            return False
        d = np.abs(self.positions() - np.asarray(point, dtype=float))
        return bool(np.any(np.all(d <= self.voxel_pitch / 2.0 + 1e-12, axis=1)))

    def min_distance(self, point):
        """Distance from a point to the nearest voxel center (inf if empty)."""
        if not self.voxels:
            return np.inf
        return float(
            np.min(np.linalg.norm(self.positions() - np.asarray(point, float), axis=1))
        )


@dataclass
class CdaSystem:
    """Assembled coupled-dipole system at one frequency.

    ``matrix`` holds A = I - K with off-diagonal blocks
    K_ij = omega^2 G_b(x_i, x_j) alpha_j and zero diagonal blocks; the
    unknowns are the exciting fields at the voxels.
    """

    omega: complex
    eps_background: complex
    k_background: complex
    positions: np.ndarray
    alpha: np.ndarray
    matrix: np.ndarray
    _lu: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_voxels(self):
        return len(self.alpha)

    @property
    def size(self):
        return 3 * self.n_voxels

    def solve(self, rhs, *, rtol=None, maxiter=SOLVER_MAX_ITERATIONS,
              dense_max_unknowns=DENSE_SOLVE_MAX_UNKNOWNS):
        """Solve A x = rhs for one or more right-hand-side columns."""
        rhs = np.asarray(rhs, dtype=complex)
        if self.size == 0:
            return rhs.copy()
        if self.size <= dense_max_unknowns:
            if self._lu is None:
                try:
                    self._lu = scipy.linalg.lu_factor(self.matrix)
                except scipy.linalg.LinAlgError as exc:
                    raise SolverError(f"singular coupled-dipole system: {exc}") from exc
            return scipy.linalg.lu_solve(self._lu, rhs)
        if rtol is None:
            rtol = solver_tolerance()
        cols = rhs.reshape(self.size, -1)
        out = np.empty_like(cols)
        for m in range(cols.shape[1]):
            sol, info = bicgstab(self.matrix, cols[:, m], rtol=rtol, atol=0.0,
                                 maxiter=maxiter)
            if info != 0:
                raise SolverError(
                    f"BiCGSTAB did not reach rtol={rtol} in {maxiter} iterations "
                    f"(info={info})"
                )
            out[:, m] = sol
        return out.reshape(rhs.shape)


def _assemble(scene, omega):
    """Build the coupled-dipole system; omega may be complex (Im >= 0)."""
    omega = complex(omega)
    eps_b = complex(eval_permittivity(scene.background, omega))
    k_b = omega * _principal_sqrt(eps_b)
    n = len(scene.voxels)
    if n == 0:
        return CdaSystem(omega, eps_b, k_b, np.zeros((0, 3)),
                         np.zeros(0, dtype=complex), np.zeros((0, 0), dtype=complex))
    volume = scene.voxel_pitch**3
    alpha = np.empty(n, dtype=complex)
    # Radiative self-reaction constant: omega^2 times the coincident
    # background tensor i omega sqrt(eps_b) / (6 pi); keeping sqrt(eps_b)
    # (rather than its real part) preserves analyticity in the upper
    # half-plane and the conjugation symmetry on the real axis.
    c_rad = omega**3 * _principal_sqrt(eps_b) / (6.0 * np.pi)
    for j, voxel in enumerate(scene.voxels):
        eps_j = complex(eval_permittivity(voxel.material, omega))
        alpha_cm = 3.0 * volume * eps_b * (eps_j - eps_b) / (eps_j + 2.0 * eps_b)
        alpha[j] = alpha_cm / (1.0 - 1j * c_rad * alpha_cm)
    positions = scene.positions()
    g = _pairwise_dyadic(positions, positions, k_b, zero_diagonal=True)
    blocks = (omega**2) * g * alpha[None, :, None, None]
    k_matrix = blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
    matrix = np.eye(3 * n, dtype=complex) - k_matrix
    return CdaSystem(omega, eps_b, k_b, positions, alpha, matrix)


def assemble_cda(scene, omega):
    """Assemble the coupled-dipole system of a scene at a real frequency."""
    omega = float(omega)
    if omega <= 0.0:
        raise ValueError("omega must be > 0")
    return _assemble(scene, omega)


def _dipole_moments(system, x0):
    """Voxel dipole moments induced by unit point dipoles at x0.

    Returns an (N, 3, 3) array whose [:, :, m] slice is the response to a
    source polarized along axis m.
    """
    n = system.n_voxels
    if n == 0:
        return np.zeros((0, 3, 3), dtype=complex)
    g_src = _pairwise_dyadic(system.positions, np.asarray(x0, float)[None, :],
                             system.k_background)[:, 0]
    rhs = (system.omega**2 * g_src).reshape(3 * n, 3)
    exciting = system.solve(rhs).reshape(n, 3, 3)
    return system.alpha[:, None, None] * exciting


def _propagate(system, x, dipoles):
    """Scattered Green contribution sum_j G_b(x, x_j) p_j, shape (3, m)."""
    if system.n_voxels == 0:
        return np.zeros((3,) + dipoles.shape[2:], dtype=complex)
    g = _pairwise_dyadic(np.asarray(x, float)[None, :], system.positions,
                         system.k_background)[0]
    return np.einsum("jab,jb...->a...", g, dipoles)


@dataclass(frozen=True)
class GreenSolution:
    """Total and scattered Green tensors for one point pair.

    ``g_total`` is None at coincident points, where only the scattered part
    ``g_ref`` stays finite.
    """

    g_ref: np.ndarray
    g_total: np.ndarray


def solve_green(scene, x, x0, omega, *, system=None):
    """Total and scattered (environment) Green tensors G and G_ref.

    The source point x0 and the observation point x must both lie outside
    the voxels; x == x0 is allowed and returns only the finite G_ref.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if scene.contains(x0):
        raise ValueError("source point x0 lies inside a voxel")
    if scene.contains(x):
        raise ValueError("observation point x lies inside a voxel")
    if system is None:
        system = assemble_cda(scene, omega)
    dipoles = _dipole_moments(system, x0)
    g_ref = _propagate(system, x, dipoles)
    coincident = bool(np.all(x == x0))
    if coincident:
        return GreenSolution(g_ref=g_ref, g_total=None)
    g_total = g_ref + green_homogeneous(x, x0, system.omega, system.eps_background)
    return GreenSolution(g_ref=g_ref, g_total=g_total)


def solve_plane_wave(scene, k_vec, pol):
    """Field of a plane wave scattered by the scene.

    ``k_vec`` is the propagation vector inside the background medium (its
    magnitude fixes the frequency through |k| = Re[n_b(w)] w), ``pol`` the
    unit polarization vector orthogonal to it.  Returns a callable sampling
    the total field E(x) outside the voxels.
    """
    k_vec = np.asarray(k_vec, dtype=float)
    pol = np.asarray(pol, dtype=complex)
    kmag = float(np.linalg.norm(k_vec))
    if kmag <= 0.0:
        raise ValueError("k_vec must be nonzero")
    if abs(np.vdot(pol, pol).real - 1.0) > 1e-9:
        raise ValueError("pol must be a unit vector")
    if abs(np.dot(pol, k_vec)) >= 1e-12 * kmag:
        raise ValueError("pol must be orthogonal to k_vec")

    omega = kmag
    for _ in range(200):
        n_re = _principal_sqrt(eval_permittivity(scene.background, omega)).real
        if n_re <= 0.0:
            raise ValueError("background does not support a propagating wave")
        omega_new = kmag / n_re
        if abs(omega_new - omega) <= 1e-14 * omega:
            omega = omega_new
            break
        omega = omega_new
    else:
        raise SolverError("background dispersion relation did not converge")

    system = assemble_cda(scene, omega)
    n = system.n_voxels
    if n:
        phases = np.exp(1j * system.positions @ k_vec)
        rhs = (phases[:, None] * pol[None, :]).reshape(3 * n)
        exciting = system.solve(rhs).reshape(n, 3)
        dipoles = system.alpha[:, None] * exciting
    else:
        dipoles = np.zeros((0, 3), dtype=complex)

    k0_sq = omega**2

    def sample(x):
        x = np.asarray(x, dtype=float)
        incident = pol * np.exp(1j * np.dot(k_vec, x))
        if n == 0:
            return incident
        return incident + k0_sq * _propagate(system, x, dipoles)

    sample.omega = omega
    sample.system = system
    return sample
