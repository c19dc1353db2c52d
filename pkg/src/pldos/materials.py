"""Causal dispersive permittivity models.

Permittivities are sums of Drude-Lorentz resonances on top of a constant
high-frequency limit,

    eps(w) = eps_infinity + sum_k  S_k / (w_k^2 - w^2 - i g_k w),

with oscillator strength S_k >= 0, resonance w_k >= 0 (w_k = 0 is the Drude
limit) and damping g_k > 0.  Strictly positive damping keeps every pole of
eps in the lower half of the complex frequency plane, so eps is analytic for
Im(w) >= 0 and its real and imaginary parts form a Hilbert-transform pair.

Units: hbar = c = 1 throughout the package; angular frequencies are measured
in inverse scene length units.
"""

from dataclasses import dataclass

import numpy as np

# Denominators smaller than this are treated as a pole hit.
_POLE_EPS = 1e-300


@dataclass(frozen=True)
class LorentzTerm:
    """One Drude-Lorentz resonance of the permittivity."""

    strength: float
    resonance: float
    damping: float

    def __post_init__(self):
        if not self.strength >= 0.0:
            raise ValueError(f"oscillator strength must be >= 0, got {self.strength}")
        if not self.resonance >= 0.0:
            raise ValueError(f"resonance frequency must be >= 0, got {self.resonance}")
        if not self.damping > 0.0:
            raise ValueError(f"damping must be > 0 for passivity, got {self.damping}")

    def poles(self):
        """Both complex-frequency poles of this term (always Im < 0)."""
        disc = 4.0 * self.resonance**2 - self.damping**2
        root = np.sqrt(complex(disc))
        return (
            (-1j * self.damping + root) / 2.0,
            (-1j * self.damping - root) / 2.0,
        )


@dataclass(frozen=True)
class PermittivityModel:
    """Sum-of-resonances permittivity with high-frequency limit eps_infinity."""

    eps_infinity: float = 1.0
    terms: tuple = ()

    def __post_init__(self):
        if not self.eps_infinity >= 1.0:
            raise ValueError(f"eps_infinity must be >= 1, got {self.eps_infinity}")
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            if not isinstance(term, LorentzTerm):
                raise TypeError("terms must be LorentzTerm instances")

    @property
    def is_vacuum(self):
        return not self.terms and self.eps_infinity == 1.0


VACUUM = PermittivityModel()


def eval_permittivity(model, omega):
    """Evaluate eps(omega) for scalar or array omega (complex allowed).

    Valid anywhere except at the poles of the model, which all lie strictly
    below the real axis.  On the real axis the result obeys
    eps(-w) = conj(eps(w)) and Im(eps) >= 0 for w >= 0.
    """
    omega = np.asarray(omega)
    eps = np.full(omega.shape, complex(model.eps_infinity))
    for term in model.terms:
        den = term.resonance**2 - omega * omega - 1j * term.damping * omega
        if np.min(np.abs(den)) < _POLE_EPS:
            raise ValueError(
                "permittivity evaluated too close to a resonance pole "
                f"(resonance={term.resonance}, damping={term.damping})"
            )
        eps = eps + term.strength / den
    if eps.ndim == 0:
        return complex(eps)
    return eps


def refractive_index(model, omega):
    """Principal-branch complex index sqrt(eps); Re >= 0, and Im >= 0 when Re = 0."""
    return np.sqrt(eval_permittivity(model, omega) + 0j)


@dataclass(frozen=True)
class KramersKronigReport:
    """Outcome of a numerical causality (Hilbert-pair) consistency check."""

    max_error: float
    passed: bool
    tol: float
    n_points: int
    omega_max: float


def check_kramers_kronig(model, grid, tol):
    """Check that Re eps - eps_infinity is the Hilbert transform of Im eps.

    The dispersive part of the real permittivity is reconstructed from
    Im eps sampled on ``grid`` through

        Re eps(w) - eps_inf = (2/pi) P.V. int_0^wmax  w' Im eps(w') / (w'^2 - w^2) dw'

    using a trapezoid rule whose singular node is dropped; on a uniform grid
    the antisymmetric parts of the kernel around the singularity cancel in
    symmetric pairs.  ``max_error`` is the largest deviation from the
    analytic real part, normalised by the peak magnitude of the dispersive
    part over the grid.  Reconstruction targets are restricted to the lower
    half of the grid, away from the one-sided truncation edge at wmax.
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 16:
        raise ValueError("grid must be a 1-D array with at least 16 points")
    h = grid[1] - grid[0]
    if h <= 0.0 or not np.allclose(np.diff(grid), h, rtol=1e-9, atol=0.0):
        raise ValueError("grid must be uniformly spaced and increasing")
    for term in model.terms:
        if h > term.damping / 16.0:
            raise ValueError(
                "grid too coarse: need at least 16 points per damping width "
                f"(damping={term.damping}, spacing={h})"
            )
    if model.terms:
        top = max(term.resonance for term in model.terms)
        if grid[-1] <= 2.0 * top:
            raise ValueError("grid must extend well beyond the highest resonance")

    eps = eval_permittivity(model, grid)
    im = eps.imag
    re_disp = eps.real - model.eps_infinity
    scale = max(float(np.max(np.abs(re_disp))), _POLE_EPS)

    n = grid.size
    # Interior targets only; the missing [wmax, inf) tail corrupts the edge.
    targets = np.unique(np.linspace(1, n // 2, min(n // 2, 256), dtype=int))

    weights = np.full(n, h)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    numerator = grid * im * weights

    max_error = 0.0
    for i in targets:
        den = grid**2 - grid[i] ** 2
        den[i] = np.inf  # drop singular node; pairs cancel around it
        rec = (2.0 / np.pi) * np.sum(numerator / den)
        err = abs(rec - re_disp[i]) / scale
        if err > max_error:
            max_error = err

    return KramersKronigReport(
        max_error=max_error,
        passed=bool(max_error < tol),
        tol=tol,
        n_points=n,
        omega_max=float(grid[-1]),
    )
