"""Closed-form plasma-sheath propagation math.

Maps electron density to the complex channel gain of a single-layer,
collisional plasma slab: electron density -> plasma frequency -> complex
dielectric coefficient -> attenuation / phase-shift coefficients -> gain
``exp(-alpha*z) * exp(-j*beta*z)``.

Unit conventions
----------------
Everything internal is SI: densities in m^-3, angular frequencies in rad/s,
lengths in m. The reference operating point uses a 9 GHz carrier and a
20 GHz electron-neutral collision rate, both read as ordinary frequencies
and converted to angular ones (a flag in the bench config layer flips that
interpretation). Densities quoted per cm^3 must be converted by the caller
(config layer accepts an explicit per-cm^3 suffix).

Two forms of the dielectric loss term are supported. The default
("printed") uses a ``nu**2 / omega`` loss numerator; ``standard_drude_loss``
switches to the textbook Drude ``nu / omega`` form. The attenuation /
phase closed forms and the square-root route are kept consistent with
whichever form is selected, so the cross-check between them is valid under
both. All functions are pure and accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError

__all__ = [
    "CODATA",
    "PhysicalConstants",
    "ChannelParams",
    "DensityTrajectory",
    "plasma_frequency",
    "dielectric_coefficient",
    "attenuation_phase_coefficients",
    "propagation_vector",
    "channel_gain",
    "density_trajectory",
    "calibrate_sheath_thickness",
    "reference_channel_params",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA constants used by the propagation formulas. Not configurable."""

    electron_charge: float = 1.602176634e-19     # C (exact)
    vacuum_permittivity: float = 8.8541878128e-12  # F/m
    electron_mass: float = 9.1093837015e-31      # kg
    light_speed: float = 299792458.0             # m/s (exact)

    def __post_init__(self):
        for name in ("electron_charge", "vacuum_permittivity",
                     "electron_mass", "light_speed"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


CODATA = PhysicalConstants()


@dataclass(frozen=True)
class ChannelParams:
    """Plasma-sheath channel configuration.

    Parameters
    ----------
    carrier_angular_freq : float
        Carrier angular frequency, rad/s. Strictly positive.
    collision_angular_freq : float
        Electron-neutral collision angular frequency, rad/s. Nonnegative.
    sheath_thickness : float
        Slab thickness z in meters. Strictly positive.
    density_range : (float, float)
        Inclusive electron-density range [n_min, n_max] in m^-3 with
        0 < n_min <= n_max.
    standard_drude_loss : bool
        Use the standard Drude loss numerator instead of the printed form.
    """

    carrier_angular_freq: float
    collision_angular_freq: float
    sheath_thickness: float
    density_range: tuple[float, float]
    standard_drude_loss: bool = False

    def __post_init__(self):
        if self.carrier_angular_freq <= 0:
            raise ValueError("carrier_angular_freq must be > 0")
        if self.collision_angular_freq < 0:
            raise ValueError("collision_angular_freq must be >= 0")
        if self.sheath_thickness <= 0:
            raise ValueError("sheath_thickness must be > 0")
        n_min, n_max = self.density_range
        if not (0 < n_min <= n_max):
            raise ValueError("density_range must satisfy 0 < n_min <= n_max")


@dataclass(frozen=True)
class DensityTrajectory:
    """Deterministic electron-density time series specification.

    ``constant_level`` applies only to the constant profile and defaults to
    the midpoint of the channel's density range.
    """

    profile_kind: str = "sinusoid"   # sinusoid | linear_sweep | constant
    oscillation_freq: float = 20e3   # Hz, sinusoid only
    phase_offset: float = 0.0        # rad, sinusoid only
    length: int = 4096
    symbol_rate: float = 1e6         # Hz
    constant_level: float | None = None

    def __post_init__(self):
        if self.profile_kind not in ("sinusoid", "linear_sweep", "constant"):
            raise ConfigError(f"unknown density profile {self.profile_kind!r}")
        if self.length < 1:
            raise ConfigError("trajectory length must be >= 1")
        if self.symbol_rate <= 0:
            raise ConfigError("symbol_rate must be > 0")


def plasma_frequency(n_e, constants: PhysicalConstants = CODATA):
    """Electron plasma frequency sqrt(n_e e^2 / (eps0 m_e)) in rad/s."""
    n_e = np.asarray(n_e, dtype=float)
    if np.any(n_e < 0):
        raise ValueError("electron density must be >= 0")
    out = np.sqrt(n_e * constants.electron_charge**2
                  / (constants.vacuum_permittivity * constants.electron_mass))
    return out if out.ndim else float(out)


def _loss_factor(params: ChannelParams) -> float:
    # Printed form carries nu^2/omega; the standard Drude form nu/omega.
    nu = params.collision_angular_freq
    omega = params.carrier_angular_freq
    return (nu / omega) if params.standard_drude_loss else (nu**2 / omega)


def dielectric_coefficient(n_e, params: ChannelParams,
                           constants: PhysicalConstants = CODATA):
    """Complex relative dielectric coefficient of the collisional plasma.

    Real part ``1 - wp^2/(w^2 + nu^2)``; imaginary part is the negative
    loss term (zero loss only at zero density or zero collision rate).
    """
    n_e = np.asarray(n_e, dtype=float)
    if np.any(n_e < 0):
        raise ValueError("electron density must be >= 0")
    wp2 = plasma_frequency(n_e, constants) ** 2
    x = wp2 / (params.carrier_angular_freq**2 + params.collision_angular_freq**2)
    out = np.asarray((1.0 - x) - 1j * _loss_factor(params) * x, dtype=complex)
    return out if n_e.ndim else complex(out)


def attenuation_phase_coefficients(n_e, params: ChannelParams,
                                   constants: PhysicalConstants = CODATA):
    """Attenuation alpha (Np/m) and phase-shift beta (rad/m) closed forms.

    Derived from ``k = (w/c) sqrt(eps_r) = beta - j alpha`` with the branch
    that keeps alpha >= 0:

        alpha = w/(sqrt(2) c) * sqrt(-re + sqrt(re^2 + im^2))
        beta  = w/(sqrt(2) c) * sqrt(+re + sqrt(re^2 + im^2))

    where ``re`` and ``im`` are the real part and (magnitude of the)
    imaginary part of the dielectric coefficient.
    """
    n_e = np.asarray(n_e, dtype=float)
    if np.any(n_e < 0):
        raise ValueError("electron density must be >= 0")
    wp2 = plasma_frequency(n_e, constants) ** 2
    omega = params.carrier_angular_freq
    x = wp2 / (omega**2 + params.collision_angular_freq**2)
    re = 1.0 - x
    im = _loss_factor(params) * x
    mag = np.hypot(re, im)
    scale = omega / (math.sqrt(2.0) * constants.light_speed)
    # Clip: mag - re and mag + re are >= 0 analytically; rounding can dip below.
    alpha = scale * np.sqrt(np.maximum(mag - re, 0.0))
    beta = scale * np.sqrt(np.maximum(mag + re, 0.0))
    if alpha.ndim:
        return alpha, beta
    return float(alpha), float(beta)


def propagation_vector(n_e, params: ChannelParams,
                       constants: PhysicalConstants = CODATA):
    """Complex propagation vector ``k = (w/c) sqrt(eps_r)``, square-root route.

    Uses the principal complex square root, flipped where necessary so that
    ``k = beta - j alpha`` always has alpha >= 0 (the decaying branch under
    the ``exp(-j k z)`` convention). Cross-checks the closed forms above.
    """
    scalar = np.asarray(n_e).ndim == 0
    eps = np.asarray(dielectric_coefficient(n_e, params, constants),
                     dtype=complex)
    root = np.sqrt(eps)
    root = np.where(root.imag > 0, -root, root)
    out = params.carrier_angular_freq / constants.light_speed * root
    return complex(out) if scalar else out


def channel_gain(n_e, params: ChannelParams,
                 constants: PhysicalConstants = CODATA):
    """Complex baseband channel gain ``exp(-alpha z) exp(-j beta z)``."""
    scalar = np.asarray(n_e).ndim == 0
    alpha, beta = attenuation_phase_coefficients(n_e, params, constants)
    z = params.sheath_thickness
    out = np.exp(-np.asarray(alpha) * z) * np.exp(-1j * np.asarray(beta) * z)
    return complex(out) if scalar else out


def density_trajectory(traj: DensityTrajectory, params: ChannelParams):
    """Electron-density sequence (m^-3) of length ``traj.length``.

    sinusoid      midpoint + half-span * sin(2 pi f t + phase); sweeps the
                  full density range once per oscillation period.
    linear_sweep  n_min at the first sample, n_max at the last.
    constant      constant_level (midpoint of the range when unset).
    """
    n_min, n_max = params.density_range
    m = traj.length
    if traj.profile_kind == "constant":
        level = traj.constant_level
        if level is None:
            level = 0.5 * (n_min + n_max)
        if not (n_min <= level <= n_max):
            raise ConfigError(
                f"constant_level {level:g} outside density range "
                f"[{n_min:g}, {n_max:g}]")
        return np.full(m, float(level))
    if traj.profile_kind == "linear_sweep":
        return np.linspace(n_min, n_max, m)
    # sinusoid
    if traj.oscillation_freq <= 0:
        raise ConfigError("oscillation_freq must be > 0 for the sinusoid profile")
    t = np.arange(m) / traj.symbol_rate
    mid = 0.5 * (n_min + n_max)
    half = 0.5 * (n_max - n_min)
    n_e = mid + half * np.sin(2.0 * math.pi * traj.oscillation_freq * t
                              + traj.phase_offset)
    # sin is bounded but rounding may overshoot the range by ~1 ulp
    return np.clip(n_e, n_min, n_max)


def calibrate_sheath_thickness(params: ChannelParams, gain_floor: float = 0.05,
                               constants: PhysicalConstants = CODATA) -> ChannelParams:
    """Bisect the slab thickness so min |gain| over the density range = gain_floor.

    |gain| is monotone nonincreasing in density at the reference operating
    point, so the minimum sits at n_max and ``exp(-alpha(n_max) z)`` is
    strictly decreasing in z. Returns a copy of ``params`` with the
    calibrated thickness.
    """
    if not (0 < gain_floor < 1):
        raise ConfigError("gain_floor must lie in (0, 1)")
    alpha_max, _ = attenuation_phase_coefficients(params.density_range[1],
                                                  params, constants)
    if alpha_max <= 0:
        raise ConfigError("channel is lossless at n_max; cannot calibrate z")
    target = -math.log(gain_floor)
    lo, hi = 0.0, 1.0
    while alpha_max * hi < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if alpha_max * mid < target:
            lo = mid
        else:
            hi = mid
    return replace(params, sheath_thickness=0.5 * (lo + hi))


def reference_channel_params(carrier_freq: float = 9e9,
                             collision_freq: float = 20e9,
                             density_range: tuple[float, float] = (1e22, 6e23),
                             sheath_thickness: float | None = None,
                             frequencies_are_angular: bool = False,
                             standard_drude_loss: bool = False,
                             gain_floor: float = 0.05) -> ChannelParams:
    """Channel parameters at the reference operating point.

    ``carrier_freq`` and ``collision_freq`` are ordinary frequencies in Hz
    converted to angular ones unless ``frequencies_are_angular`` is set
    (in which case they are taken as rad/s verbatim). Densities are m^-3.
    When ``sheath_thickness`` is None the thickness is calibrated so the
    deepest fade has magnitude ``gain_floor``.
    """
    factor = 1.0 if frequencies_are_angular else 2.0 * math.pi
    params = ChannelParams(
        carrier_angular_freq=factor * carrier_freq,
        collision_angular_freq=factor * collision_freq,
        sheath_thickness=sheath_thickness if sheath_thickness else 1.0,
        density_range=density_range,
        standard_drude_loss=standard_drude_loss,
    )
    if sheath_thickness is None:
        params = calibrate_sheath_thickness(params, gain_floor)
    return params
