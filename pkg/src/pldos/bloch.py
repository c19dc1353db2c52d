"""Optical Bloch equations for a driven two-level emitter in a scene.

In the frame rotating at the laser frequency, with s the slowly varying
coherence and w the inversion,

    ds/dt = -i Delta s - i Omega w - (Gamma'/2) s
    dw/dt = -2i conj(Omega) s + 2i Omega conj(s) - Gamma' (1 + w),

where Delta = omega0 - delta' - omega_L, Omega is the complex Rabi
frequency, and Gamma', delta' are the decay rate and frequency shift of the
environment evaluated (by default) at the laser frequency.
"""

from dataclasses import dataclass

import numpy as np

from . import emission


@dataclass(frozen=True)
class LaserRates:
    """Decay rate and frequency shift evaluated at the laser frequency."""

    gamma_prime: float
    delta_prime: float


def rates_at_laser(emitter, scene, omega_l, **lamb_kwargs):
    """Gamma' and delta' at omega_l, through the same code path as the
    transition-frequency rates (set omega_l = omega0 to recover them)."""
    if not omega_l > 0.0:
        raise ValueError("omega_l must be > 0")
    shifted = emitter.with_omega0(omega_l)
    gamma_prime = emission.decay_rate(shifted, scene)
    delta_prime = emission.lamb_shift(shifted, scene, **lamb_kwargs).delta
    return LaserRates(gamma_prime=gamma_prime, delta_prime=delta_prime)


@dataclass(frozen=True)
class DriveParams:
    """Laser drive and environment rates for the rotating-frame equations."""

    omega_l: float
    rabi: complex
    detuning: float
    gamma_prime: float
    delta_prime: float

    def __post_init__(self):
        if not self.gamma_prime >= 0.0:
            raise ValueError("gamma_prime must be >= 0")


def make_drive(emitter, scene, omega_l, rabi, *, rates_at="laser", **lamb_kwargs):
    """Build DriveParams, evaluating the rates at the laser frequency or at
    the transition frequency (``rates_at`` = 'laser' | 'transition')."""
    if rates_at not in ("laser", "transition"):
        raise ValueError("rates_at must be 'laser' or 'transition'")
    freq = omega_l if rates_at == "laser" else emitter.omega0
    rates = rates_at_laser(emitter, scene, freq, **lamb_kwargs)
    return DriveParams(
        omega_l=float(omega_l),
        rabi=complex(rabi),
        detuning=emitter.omega0 - rates.delta_prime - float(omega_l),
        gamma_prime=rates.gamma_prime,
        delta_prime=rates.delta_prime,
    )


@dataclass(frozen=True)
class BlochState:
    """Rotating-frame coherence s = <S> and inversion w = <sigma_z>."""

    s: complex
    w: float


def bloch_rhs(state, params):
    """Time derivative of the Bloch state under drive and decay."""
    s = complex(state.s)
    w = float(state.w)
    omega = params.rabi
    ds = (-1j * params.detuning * s - 1j * omega * w
          - 0.5 * params.gamma_prime * s)
    dw = (-2j * np.conj(omega) * s + 2j * omega * np.conj(s)).real \
        - params.gamma_prime * (1.0 + w)
    return BlochState(s=ds, w=dw)


@dataclass(frozen=True)
class BlochTrajectory:
    t: np.ndarray
    s: np.ndarray
    w: np.ndarray

    def final_state(self):
        return BlochState(s=complex(self.s[-1]), w=float(self.w[-1]))


def integrate_bloch(initial, params, t_span, dt):
    """Fixed-step classical 4th-order integration over [0, t_span].

    The step must satisfy dt <= 0.1 / max(Gamma', |Omega|, |Delta|); the
    actual step is t_span / n with n chosen so it never exceeds dt.
    """
    t_span = float(t_span)
    dt = float(dt)
    if t_span < 0.0:
        raise ValueError("t_span must be >= 0")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    fastest = max(params.gamma_prime, abs(params.rabi), abs(params.detuning))
    if fastest > 0.0 and dt > 0.1 / fastest:
        raise ValueError(
            f"dt={dt} too large: need dt <= 0.1 / max(rates) = {0.1 / fastest}"
        )
    if t_span == 0.0:
        return BlochTrajectory(t=np.zeros(1),
                               s=np.array([complex(initial.s)]),
                               w=np.array([float(initial.w)]))

    n = int(np.ceil(t_span / dt - 1e-12))
    h = t_span / n
    gp = params.gamma_prime
    det = params.detuning
    om = complex(params.rabi)
    om_c = np.conj(om)

    def deriv(s, w):
        ds = -1j * det * s - 1j * om * w - 0.5 * gp * s
        dw = (-2j * om_c * s + 2j * om * np.conj(s)).real - gp * (1.0 + w)
        return ds, dw

    t = np.linspace(0.0, t_span, n + 1)
    s_out = np.empty(n + 1, dtype=complex)
    w_out = np.empty(n + 1, dtype=float)
    s = complex(initial.s)
    w = float(initial.w)
    s_out[0] = s
    w_out[0] = w
    for i in range(n):
        k1s, k1w = deriv(s, w)
        k2s, k2w = deriv(s + 0.5 * h * k1s, w + 0.5 * h * k1w)
        k3s, k3w = deriv(s + 0.5 * h * k2s, w + 0.5 * h * k2w)
        k4s, k4w = deriv(s + h * k3s, w + h * k3w)
        s = s + (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        w = w + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        s_out[i + 1] = s
        w_out[i + 1] = w
    return BlochTrajectory(t=t, s=s_out, w=w_out)


def steady_state(params):
    """Long-time fixed point of the driven equations.

    On resonance the closed form w = -1 / (1 + 8 |Omega|^2 / Gamma'^2),
    s = -2i Omega w / Gamma' applies; with detuning the 3x3 real linear
    fixed-point system is solved instead.
    """
    om = complex(params.rabi)
    gp = params.gamma_prime
    if om == 0.0:
        return BlochState(s=0j, w=-1.0)
    if gp <= 0.0:
        raise ValueError("no steady state: gamma_prime = 0 with nonzero drive")
    if params.detuning == 0.0:
        w = -1.0 / (1.0 + 8.0 * abs(om) ** 2 / gp**2)
        return BlochState(s=-2j * om * w / gp, w=w)
    det = params.detuning
    o_r, o_i = om.real, om.imag
    # Unknowns (Re s, Im s, w); rows are d(Re s)/dt, d(Im s)/dt, dw/dt = 0.
    a = np.array([
        [-gp / 2.0, det, o_i],
        [-det, -gp / 2.0, -o_r],
        [-4.0 * o_i, 4.0 * o_r, -gp],
    ])
    b = np.array([0.0, 0.0, gp])
    x = np.linalg.solve(a, b)
    return BlochState(s=complex(x[0], x[1]), w=float(x[2]))
