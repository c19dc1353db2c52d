"""Spontaneous-emission observables of a two-level dipole emitter.

Everything here derives from the self-interaction kernel

    B(w) = mu* . (w^2/c^2) G(x0, x0, w) . mu / hbar,

whose imaginary part at the transition frequency gives the decay rate
Gamma = 2 Im B(w0) and whose real part gives the frequency shift
-delta = Re B(w0).  The coincident background tensor has a divergent real
part; that piece is taken as already renormalized into the input transition
frequency omega0, so only the finite environment part G_ref enters shift
computations while the background contributes its exact imaginary part.

The excited-state amplitude S(t) is available in the exponential pole
approximation and by direct quadrature of the inverse-Laplace (Bromwich)
integral along a line just right of the imaginary axis.
"""

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from . import green
from .errors import QuadratureError
from .materials import eval_permittivity

_DEFAULT_WW_TOL = 1e-3
_LAMB_CONVERGENCE_RTOL = 1e-2


def quad_tolerance():
    """Refinement target for the amplitude quadrature (env: PLDOS_QUAD_TOL)."""
    return float(os.environ.get("PLDOS_QUAD_TOL", _DEFAULT_WW_TOL))


@dataclass(frozen=True)
class Emitter:
    """Point two-level emitter: position, transition dipole, frequency.

    ``omega0`` is the dipole-corrected transition frequency; the self-energy
    of the smeared dipole distribution (width ``smear_width``) is treated as
    already absorbed into it, so the width is metadata only.
    """

    position: tuple
    mu: tuple
    omega0: float
    smear_width: float = 0.0

    def __post_init__(self):
        position = tuple(float(c) for c in self.position)
        mu = tuple(complex(c) for c in self.mu)
        if len(position) != 3 or len(mu) != 3:
            raise ValueError("position and mu must have 3 components")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "mu", mu)
        if not self.omega0 > 0.0:
            raise ValueError("omega0 must be > 0")
        if not self.smear_width >= 0.0:
            raise ValueError("smear_width must be >= 0")
        if not np.linalg.norm(mu) > 0.0:
            raise ValueError("dipole moment must be nonzero")

    @property
    def position_vec(self):
        return np.asarray(self.position, dtype=float)

    @property
    def mu_vec(self):
        return np.asarray(self.mu, dtype=complex)

    @property
    def mu_norm(self):
        return float(np.linalg.norm(self.mu_vec))

    @property
    def n_hat(self):
        return self.mu_vec / self.mu_norm

    def with_omega0(self, omega0):
        return dataclasses.replace(self, omega0=float(omega0))


@dataclass(frozen=True)
class LdosValues:
    """Projected local density of states and its background/environment split."""

    total: float
    bulk: float
    ref: float


def ldos(scene, x0, n_hat, omega, *, system=None):
    """LDOS at x0 projected on the (possibly complex) unit vector n_hat.

    total = (6 w / pi) Im[n* . G(x0,x0,w) . n] evaluated as the sum of the
    bulk term w^2 Re[n_b(w)] / pi^2 and the environment term built from
    G_ref; passivity makes the total nonnegative.
    """
    omega = float(omega)
    if omega <= 0.0:
        raise ValueError("omega must be > 0")
    n_hat = np.asarray(n_hat, dtype=complex)
    if abs(np.vdot(n_hat, n_hat).real - 1.0) > 1e-9:
        raise ValueError("n_hat must be a unit vector")
    eps_b = eval_permittivity(scene.background, omega)
    bulk = omega**2 * np.sqrt(complex(eps_b)).real / np.pi**2
    if scene.voxels:
        g_ref = green.solve_green(scene, x0, x0, omega, system=system).g_ref
        ref = (6.0 * omega / np.pi) * np.vdot(n_hat, g_ref @ n_hat).imag
    else:
        ref = 0.0
    return LdosValues(total=bulk + ref, bulk=bulk, ref=ref)


def decay_rate(emitter, scene, *, system=None):
    """Spontaneous decay rate Gamma = 2 Im B(omega0), through the LDOS split."""
    w0 = emitter.omega0
    mu = emitter.mu_vec
    mu2 = float(np.vdot(mu, mu).real)
    eps_b = eval_permittivity(scene.background, w0)
    bulk_im = mu2 * (w0 / (6.0 * np.pi)) * np.sqrt(complex(eps_b)).real
    if scene.voxels:
        g_ref = green.solve_green(scene, emitter.position, emitter.position, w0,
                                  system=system).g_ref
        ref_im = np.vdot(mu, g_ref @ mu).imag
    else:
        ref_im = 0.0
    return 2.0 * w0**2 * (bulk_im + ref_im)


def _b_ref(emitter, scene, omega, *, system=None):
    """Environment self-interaction kernel w^2 mu* . G_ref(x0,x0,w) . mu.

    omega may be complex with Im >= 0; the kernel is analytic there because
    the scene is causal (permittivity poles and scattering resonances sit in
    the lower half-plane).
    """
    if not scene.voxels:
        return 0j
    if system is None:
        system = green._assemble(scene, omega)
    dipoles = green._dipole_moments(system, emitter.position)
    g_ref = green._propagate(system, emitter.position, dipoles)
    mu = emitter.mu_vec
    return complex(omega * omega * np.vdot(mu, g_ref @ mu))


@dataclass(frozen=True)
class LambShift:
    """Environment frequency shift, resonant and non-resonant pieces.

    resonant_integral  = (1/pi) P.V. int_0^inf Im B_ref(w) / (w - w0) dw
    nonresonant_integral = (1/pi)      int_0^inf Im B_ref(w) / (w + w0) dw

    The physical shift used downstream is delta = -resonant_integral; the
    non-resonant piece carries a known spurious sign within the exponential-
    decay approximation and is reported for inspection only.
    """

    resonant_integral: float
    nonresonant_integral: float

    @property
    def delta(self):
        return -self.resonant_integral

    @property
    def delta_including_nonresonant(self):
        return -(self.resonant_integral + self.nonresonant_integral)

    def shift(self, include_nonresonant=False):
        return self.delta_including_nonresonant if include_nonresonant else self.delta


def _lamb_integrals(emitter, scene, omega_max, n_points, n_tail, tail_scale):
    """One quadrature pass of the two shift integrals.

    Real-axis part on [0, omega_max] by a midpoint rule with the principal
    value handled through subtraction of the resonant value; the remaining
    [omega_max, inf) pieces are rotated onto the vertical line
    omega_max + i y, where causality makes the integrand decay like
    exp(-2 n_b d y) (d = emitter-scatterer distance), and evaluated with
    Gauss-Legendre nodes mapped to (0, inf).
    """
    w0 = emitter.omega0
    h = omega_max / n_points
    grid = (np.arange(n_points) + 0.5) * h
    if np.min(np.abs(grid - w0)) < 1e-9 * w0:
        n_points += 1
        h = omega_max / n_points
        grid = (np.arange(n_points) + 0.5) * h

    f = np.array([_b_ref(emitter, scene, w).imag for w in grid])
    f0 = _b_ref(emitter, scene, w0).imag

    resonant = (1.0 / np.pi) * (
        h * float(np.sum((f - f0) / (grid - w0)))
        + f0 * np.log((omega_max - w0) / w0)
    )
    nonresonant = (1.0 / np.pi) * h * float(np.sum(f / (grid + w0)))

    nodes, weights = np.polynomial.legendre.leggauss(n_tail)
    u = (nodes + 1.0) / 2.0
    du = weights / 2.0
    y = tail_scale * u / (1.0 - u)
    dy = du * tail_scale / (1.0 - u) ** 2
    z = omega_max + 1j * y
    bz = np.array([_b_ref(emitter, scene, zk) for zk in z])
    resonant += 2.0 * ((1.0 / (2.0 * np.pi)) * np.sum(dy * bz / (z - w0))).real
    nonresonant += 2.0 * ((1.0 / (2.0 * np.pi)) * np.sum(dy * bz / (z + w0))).real
    return resonant, nonresonant


def lamb_shift(emitter, scene, *, omega_max=None, n_points=256, n_tail=48,
               max_refinements=6):
    """Environment frequency shift from the dispersion integral over Im B_ref.

    Doubles the grid until both integrals change by less than 1% relative;
    raises QuadratureError if that never happens.  An empty scene has no
    environment and shifts by exactly zero.
    """
    w0 = emitter.omega0
    if omega_max is None:
        omega_max = 12.0 * w0
    if not omega_max > 10.0 * w0:
        raise ValueError("omega_max must exceed 10 * omega0")
    if not scene.voxels:
        return LambShift(0.0, 0.0)
    if scene.contains(emitter.position):
        raise ValueError("emitter lies inside a voxel")

    n_b = np.sqrt(complex(eval_permittivity(scene.background, omega_max))).real
    d_min = scene.min_distance(emitter.position)
    tail_scale = 1.0 / (2.0 * max(n_b, 1e-3) * d_min)

    prev = None
    n = int(n_points)
    m = int(n_tail)
    for _ in range(max_refinements + 1):
        current = _lamb_integrals(emitter, scene, omega_max, n, m, tail_scale)
        if prev is not None:
            scale = max(abs(current[0]), abs(current[1]), 1e-300)
            change = max(abs(current[0] - prev[0]), abs(current[1] - prev[1]))
            if change / scale <= _LAMB_CONVERGENCE_RTOL:
                return LambShift(*current)
        prev = current
        n *= 2
        m = min(2 * m, 192)
    raise QuadratureError(
        "frequency-shift quadrature did not converge "
        f"(last relative change above {_LAMB_CONVERGENCE_RTOL})"
    )


@dataclass(frozen=True)
class EmissionResult:
    """Decay rate, shift, complex transition frequency and LDOS split."""

    gamma: float
    delta: float
    omega0: float
    omega_tilde: complex
    ldos_total: float
    ldos_bulk: float
    ldos_ref: float
    lamb: LambShift


def emission_result(emitter, scene, *, include_nonresonant=False, **lamb_kwargs):
    """Bundle Gamma, delta, omega_tilde and the LDOS split for one emitter."""
    w0 = emitter.omega0
    system = green.assemble_cda(scene, w0) if scene.voxels else None
    vals = ldos(scene, emitter.position, emitter.n_hat, w0, system=system)
    gamma = decay_rate(emitter, scene, system=system)
    lamb = lamb_shift(emitter, scene, **lamb_kwargs)
    delta = lamb.shift(include_nonresonant)
    return EmissionResult(
        gamma=gamma,
        delta=delta,
        omega0=w0,
        omega_tilde=w0 + delta - 0.5j * gamma,
        ldos_total=vals.total,
        ldos_bulk=vals.bulk,
        ldos_ref=vals.ref,
        lamb=lamb,
    )


def ww_amplitude_pole(result, t):
    """Excited-state amplitude in the exponential (pole) approximation,
    S(t) = exp(-i omega_tilde t) with S(0) = 1."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be >= 0")
    out = np.exp(-1j * result.omega_tilde * t)
    return complex(out) if out.ndim == 0 else out


def _fourier_quadrature(omegas, coeffs, t, shift):
    """sum_j coeffs_j exp(-i w_j t) times exp(shift t), chunked over t."""
    out = np.empty(t.shape, dtype=complex)
    block = max(1, int(2**22 // max(len(omegas), 1)))
    for i in range(0, len(t), block):
        tb = t[i:i + block]
        out[i:i + block] = np.exp(-1j * np.outer(tb, omegas)) @ coeffs
    return out * np.exp(shift * t)


def ww_amplitude_numeric(emitter, scene, t_grid, *, window_half_gammas=50.0,
                         tail_omega_factor=5.0, shift_factor=1e-3, tol=None,
                         n_initial=4096, max_refinements=8):
    """Excited-state amplitude by direct quadrature of the Bromwich integral.

    With p = shift - i w the inverse Laplace transform becomes

        S(t) = e^{shift t} int dw/(2 pi) e^{-i w t}
                            / [shift + i (w0 - w) - i B(w + i shift)],

    where B(w) = B_ref(w) + i Gamma_bulk(w)/2 collects the environment kernel
    and the analytic background decay rate (the divergent background real
    part is renormalized into omega0).  The kernel is evaluated on the real
    axis; the pole sits at omega_tilde, so the window is a multiple of Gamma
    around omega0 plus a coarse tail.  The grid is doubled until the result
    is stable to ``tol`` (default from PLDOS_QUAD_TOL, 1e-3).
    """
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t < 0.0):
        raise ValueError("t must be >= 0")
    if tol is None:
        tol = quad_tolerance()

    w0 = emitter.omega0
    mu2 = float(np.vdot(emitter.mu_vec, emitter.mu_vec).real)
    gamma = decay_rate(emitter, scene)
    shift = shift_factor * gamma

    half = window_half_gammas * gamma
    lo = max(w0 - half, 1e-6 * w0)
    hi = w0 + half
    hi_end = max(tail_omega_factor * w0, hi)
    floor = 1e-6 * w0

    background = scene.background

    def kernel(omegas):
        eps = np.asarray(eval_permittivity(background, omegas), dtype=complex)
        n_re = np.sqrt(eps).real
        b = 1j * omegas**3 * mu2 * n_re / (6.0 * np.pi)
        if scene.voxels:
            b = b + np.array([_b_ref(emitter, scene, w) for w in omegas])
        return b

    def evaluate(n_dense):
        n_tail = max(n_dense // 8, 64)
        parts = [np.linspace(lo, hi, n_dense)]
        if lo > floor:
            parts.insert(0, np.linspace(floor, lo, n_tail, endpoint=False))
        if hi_end > hi:
            parts.append(np.linspace(hi, hi_end, n_tail + 1)[1:])
        omegas = np.concatenate(parts)
        b = kernel(omegas)
        denom = shift + 1j * (w0 - omegas) - 1j * b
        d = np.diff(omegas)
        weights = np.zeros_like(omegas)
        weights[:-1] += d / 2.0
        weights[1:] += d / 2.0
        coeffs = weights / denom / (2.0 * np.pi)
        t_all = np.concatenate(([0.0], t))
        s_all = _fourier_quadrature(omegas, coeffs, t_all, shift)
        return s_all[0], s_all[1:]

    n = int(n_initial)
    s0_prev, s_prev = evaluate(n)
    for _ in range(max_refinements):
        n *= 2
        s0, s = evaluate(n)
        if np.max(np.abs(s - s_prev)) < tol:
            if abs(s0 - 1.0) > 1e-2:
                raise QuadratureError(
                    f"frequency window too small: |S(0) - 1| = {abs(s0 - 1.0):.3g}"
                )
            return s if np.ndim(t_grid) else complex(s[0])
        s0_prev, s_prev = s0, s
    raise QuadratureError(
        f"amplitude quadrature did not stabilize to {tol} after refinement"
    )


def make_photon_field_sampler(emitter, result, n0, scene=None,
                              extraction_kr=50.0):
    """Far-field single-photon field sampler for the decaying emitter.

    The sampled field is (w0^2) F(x) . mu exp(-i omega_tilde (t - n0 R))
    inside the forward light cone and exactly zero outside it.  The smooth
    form factor F is the uniform-medium tensor with the radial phase removed
    when the scene is empty, and is extracted from the solved scene tensor
    at radius extraction_kr / w0 along the observation direction otherwise.
    """
    x0 = emitter.position_vec
    w0 = emitter.omega0
    mu = emitter.mu_vec
    n0 = float(n0)
    system = None
    pattern_cache = {}
    has_voxels = scene is not None and scene.voxels

    def form_factor(x, r):
        nonlocal system
        if not has_voxels:
            g = green.green_homogeneous(x, x0, w0, n0 * n0)
            return g * np.exp(-1j * w0 * n0 * r)
        direction = (x - x0) / r
        key = tuple(np.round(direction, 12))
        pattern = pattern_cache.get(key)
        if pattern is None:
            if system is None:
                system = green.assemble_cda(scene, w0)
            r_ext = extraction_kr / w0
            x_ext = x0 + r_ext * direction
            g_tot = green.solve_green(scene, x_ext, x0, w0, system=system).g_total
            pattern = g_tot * (4.0 * np.pi * r_ext) * np.exp(-1j * w0 * n0 * r_ext)
            pattern_cache[key] = pattern
        return pattern / (4.0 * np.pi * r)

    def sampler(x, t):
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x - x0))
        if w0 * r <= 10.0:
            raise ValueError("far-field sampler requires omega0 * R > 10")
        t_ret = t - n0 * r
        if t_ret < 0.0:
            return np.zeros(3, dtype=complex)
        f = form_factor(x, r)
        return w0**2 * (f @ mu) * np.exp(-1j * result.omega_tilde * t_ret)

    return sampler


def photon_field_farfield(emitter, result, n0, x, t, scene=None,
                          extraction_kr=50.0):
    """Far-field photon field at one space-time point (causal: zero before
    the light front t = n0 R)."""
    sampler = make_photon_field_sampler(emitter, result, n0, scene=scene,
                                        extraction_kr=extraction_kr)
    return sampler(x, t)


def detection_intensity(sampler, x, t):
    """Broadband photon detection rate: squared modulus of the sampled field."""
    field = sampler(x, t)
    return float(np.vdot(field, field).real)


def radiated_power(emitter, result, t):
    """Power leaving the decaying dipole, hbar w0 Gamma e^{-Gamma t}."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be >= 0")
    out = emitter.omega0 * result.gamma * np.exp(-result.gamma * t)
    return float(out) if out.ndim == 0 else out


def emitted_energy(emitter, result, t):
    """Energy emitted up to time t, hbar w0 (1 - e^{-Gamma t}) -> hbar w0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be >= 0")
    out = emitter.omega0 * (1.0 - np.exp(-result.gamma * t))
    return float(out) if out.ndim == 0 else out
