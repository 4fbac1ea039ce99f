"""Measurement chain: PDH error signal, lock-in detection, EOM calibration and noise.

Only the slow dynamics are sampled. The RF modulation at ``Omega`` enters
analytically through :func:`pdh_error`, which maps an instantaneous detuning
to the demodulated error voltage.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal, special

from .errors import (
    DegenerateDiscriminantError,
    InsufficientDataError,
    InvalidParameterError,
)
from .optics import RingCavity, free_spectral_range, linewidth_fwhm

SETTLING_TIME_CONSTANTS = 10


@dataclass(frozen=True)
class PDHParams:
    """Phase-modulation and mirror parameters of the PDH lock.

    When ``input_coupler_reflectivity`` / ``round_trip_amplitude`` are None they
    are derived from the cavity finesse with ``r = a`` (see
    :func:`mirror_parameters`).
    """

    mod_angular_freq: float = 2 * math.pi * 12e6
    mod_depth: float = 1.08
    input_coupler_reflectivity: float | None = None
    round_trip_amplitude: float | None = None
    detector_gain: float = 1.0

    def __post_init__(self):
        if not self.mod_angular_freq > 0:
            raise InvalidParameterError("modulation frequency must be > 0")
        if self.mod_depth < 0:
            raise InvalidParameterError("modulation depth must be >= 0")
        r, a = self.input_coupler_reflectivity, self.round_trip_amplitude
        if r is not None and not 0 < r < 1:
            raise InvalidParameterError("input coupler reflectivity must lie in (0, 1)")
        if a is not None and not 0 < a <= 1:
            raise InvalidParameterError("round-trip amplitude must lie in (0, 1]")

    @property
    def mod_frequency(self) -> float:
        return self.mod_angular_freq / (2 * math.pi)


@dataclass(frozen=True)
class LockInParams:
    reference_freq: float = 18.5
    time_constant: float = 10.0
    filter_order: int = 4
    reference_phase: float = 0.0

    def __post_init__(self):
        if not self.reference_freq > 0:
            raise InvalidParameterError("lock-in reference frequency must be > 0")
        if not self.time_constant > 0:
            raise InvalidParameterError("lock-in time constant must be > 0")
        if int(self.filter_order) != self.filter_order or not 1 <= self.filter_order <= 8:
            raise InvalidParameterError("filter order must be an integer in [1, 8]")

    @property
    def settling_time(self) -> float:
        return SETTLING_TIME_CONSTANTS * self.time_constant


@dataclass(frozen=True)
class NoiseModel:
    """Noise on the cw-ccw frequency difference.

    ``white_split_noise_asd`` is a one-sided amplitude spectral density.
    ``laser_noise_asd`` is common-mode laser frequency noise, only seen by the
    full-loop servo.
    """

    white_split_noise_asd: float = 8.9e-3
    drift_rate: float = 0.0
    laser_noise_asd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.white_split_noise_asd < 0 or self.laser_noise_asd < 0:
            raise InvalidParameterError("noise ASD must be >= 0")

    @property
    def is_silent(self) -> bool:
        return self.white_split_noise_asd == 0 and self.drift_rate == 0


SERVO_MODES = ("ideal-lock", "full-loop")


@dataclass(frozen=True)
class ServoParams:
    mode: str = "ideal-lock"
    proportional_gain: float = 0.3
    integral_gain: float = 200.0
    actuator_bandwidth: float = 500.0
    sample_rate: float = 2000.0
    small_signal: bool = False

    def __post_init__(self):
        if self.mode not in SERVO_MODES:
            raise InvalidParameterError(f"servo mode must be one of {SERVO_MODES}")
        if self.proportional_gain < 0 or self.integral_gain < 0:
            raise InvalidParameterError("servo gains must be >= 0")
        if not self.actuator_bandwidth > 0 or not self.sample_rate > 0:
            raise InvalidParameterError("bandwidth and sample rate must be > 0")


class LockInResult(NamedTuple):
    in_phase: float
    quadrature: float
    sigma: float
    settled_duration: float


def derive_seed(base: int, *keys) -> int:
    """Child seed for sub-streams. Strings are keyed through CRC32 so the rule is stable."""
    spawn_key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys)
    state = np.random.SeedSequence(int(base), spawn_key=spawn_key).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def mirror_parameters(cavity: RingCavity, pdh: PDHParams) -> tuple[float, float]:
    """Input-coupler reflectivity and round-trip amplitude.

    Explicit values in ``pdh`` win; otherwise both equal sqrt(g), with g the
    round-trip gain solving pi*sqrt(g)/(1-g) = finesse, i.e. r*a = g.
    """
    r, a = pdh.input_coupler_reflectivity, pdh.round_trip_amplitude
    if r is not None and a is not None:
        return r, a
    f = cavity.finesse
    default = (-math.pi + math.sqrt(math.pi**2 + 4 * f * f)) / (2 * f)
    return (default if r is None else r), (default if a is None else a)


def check_modulation(cavity: RingCavity, pdh: PDHParams, ratio: float = 10.0) -> bool:
    """Warn when the modulation frequency is not well above the cavity linewidth."""
    ok = pdh.mod_frequency >= ratio * linewidth_fwhm(cavity)
    if not ok:
        warnings.warn(
            f"PDH modulation at {pdh.mod_frequency:.3g} Hz is less than {ratio:g}x "
            f"the cavity linewidth {linewidth_fwhm(cavity):.3g} Hz",
            stacklevel=2,
        )
    return ok


def reflection_coefficient(cavity: RingCavity, pdh: PDHParams, detuning):
    """Complex amplitude reflection of the input coupler at ``detuning`` Hz from resonance."""
    r, a = mirror_parameters(cavity, pdh)
    phase = np.exp(2j * np.pi * np.asarray(detuning, dtype=float) / free_spectral_range(cavity))
    return (r - a * phase) / (1 - r * a * phase)


def pdh_error(cavity: RingCavity, pdh: PDHParams, detuning):
    """Demodulated PDH error signal (V) for carrier plus one sideband pair."""
    detuning = np.asarray(detuning, dtype=float)
    fm = pdh.mod_frequency
    f0 = reflection_coefficient(cavity, pdh, detuning)
    f_up = reflection_coefficient(cavity, pdh, detuning + fm)
    f_dn = reflection_coefficient(cavity, pdh, detuning - fm)
    cross = f0 * np.conj(f_up) - np.conj(f0) * f_dn
    amp = 2 * special.j0(pdh.mod_depth) * special.j1(pdh.mod_depth)
    out = pdh.detector_gain * amp * cross.imag
    return float(out) if out.ndim == 0 else out


def pdh_discriminant(cavity: RingCavity, pdh: PDHParams, *, require_nonzero=False) -> float:
    """Slope of the PDH error at resonance, V/Hz, by central difference.

    With ``require_nonzero`` a vanishing slope raises
    :class:`DegenerateDiscriminantError`; otherwise it is returned as 0.
    """
    step = linewidth_fwhm(cavity) / 1000
    slope = (pdh_error(cavity, pdh, step) - pdh_error(cavity, pdh, -step)) / (2 * step)
    if require_nonzero and not abs(slope) > 0:
        raise DegenerateDiscriminantError(
            "PDH discriminant is zero (no modulation sidebands or degenerate mirrors)"
        )
    return slope


def equivalent_noise_bandwidth(params: LockInParams) -> float:
    """One-sided ENBW (Hz) of ``filter_order`` cascaded single-pole low-pass stages."""
    n = params.filter_order
    return (math.sqrt(math.pi) * special.gamma(n - 0.5) / (2 * special.gamma(n))
            / (2 * math.pi * params.time_constant))


def _lowpass(x, alpha, order):
    b, a = [alpha], [1.0, alpha - 1.0]
    for _ in range(order):
        x = signal.lfilter(b, a, x)
    return x


def lock_in_demodulate(series, sample_rate: float, params: LockInParams, *,
                       ac_couple: bool = True) -> LockInResult:
    """Phase-sensitive detection of ``series`` at the reference frequency.

    The references are 2*sin and 2*cos, so a tone A*sin(2 pi f t + phase)
    demodulates to ``in_phase = A``. The first ten time constants are
    discarded. ``sigma`` is the standard error of the settled in-phase mean,
    from the output variance and the filter's noise bandwidth.

    With ``ac_couple`` the input mean is removed first. A large DC offset
    switched on at t=0 otherwise rings through the filter well past the
    settling window.
    """
    x = np.asarray(series, dtype=float)
    if ac_couple and x.size:
        x = x - x.mean()
    if params.reference_freq >= sample_rate / 2:
        raise InvalidParameterError(
            f"reference {params.reference_freq} Hz is above Nyquist for {sample_rate} Hz sampling"
        )
    n_skip = int(math.ceil(params.settling_time * sample_rate))
    if x.size <= n_skip + 1:
        raise InsufficientDataError(
            f"series of {x.size / sample_rate:.6g} s is too short; the lock-in needs "
            f"more than {params.settling_time:.6g} s (10 time constants)"
        )
    t = np.arange(x.size) / sample_rate
    arg = 2 * np.pi * params.reference_freq * t + params.reference_phase
    alpha = -math.expm1(-1.0 / (sample_rate * params.time_constant))
    x_out = _lowpass(2 * np.sin(arg) * x, alpha, params.filter_order)[n_skip:]
    y_out = _lowpass(2 * np.cos(arg) * x, alpha, params.filter_order)[n_skip:]
    settled = x_out.size / sample_rate
    # np.var removes the sample mean, which eats one of the n_eff independent samples
    n_eff = 2 * equivalent_noise_bandwidth(params) * settled
    sigma = math.sqrt(float(np.var(x_out)) / max(n_eff - 1.0, 1.0))
    return LockInResult(float(np.mean(x_out)), float(np.mean(y_out)), sigma, settled)


def generate_noise(model: NoiseModel, n_samples: int, sample_rate: float, *, stream: str = "split"):
    """Seeded frequency-difference noise (Hz): white Gaussian plus linear drift.

    ``stream="laser"`` draws the common-mode laser noise from an independent
    sub-stream of the same seed.
    """
    if n_samples <= 0:
        raise InvalidParameterError("n_samples must be > 0")
    if stream == "split":
        asd, drift = model.white_split_noise_asd, model.drift_rate
    elif stream == "laser":
        asd, drift = model.laser_noise_asd, 0.0
    else:
        raise InvalidParameterError(f"unknown noise stream {stream!r}")
    out = np.zeros(n_samples)
    if asd > 0:
        rng = np.random.default_rng(derive_seed(model.seed, stream))
        out += rng.standard_normal(n_samples) * (asd * math.sqrt(sample_rate / 2))
    if drift:
        out += drift * (np.arange(n_samples) / sample_rate)
    return out


def eom_calibration_signal(injected_split_amplitude: float, f_e: float, discriminant: float,
                           duration: float, sample_rate: float, noise: NoiseModel | None = None):
    """Error-signal series produced by a known EOM frequency modulation of the cw beam."""
    if injected_split_amplitude < 0:
        raise InvalidParameterError("injected amplitude must be >= 0")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    split = injected_split_amplitude * np.sin(2 * np.pi * f_e * t)
    if noise is not None:
        split = split + generate_noise(noise, n, sample_rate)
    return discriminant * split


def servo_residual(laser_noise, servo: ServoParams):
    """cw detuning left by a discrete PI loop driving a first-order actuator.

    The loop is linear, so the sample-by-sample recursion collapses into the
    closed-loop sensitivity filter 1 / (1 + G C).
    """
    dt = 1.0 / servo.sample_rate
    alpha = -math.expm1(-2 * math.pi * servo.actuator_bandwidth * dt)
    beta = 1 - alpha
    c0 = servo.proportional_gain + servo.integral_gain * dt
    c1 = -servo.proportional_gain
    b = [1.0, -(1 + beta), beta]
    a = [1.0, -(1 + beta) + alpha * c0, beta + alpha * c1]
    if np.any(np.abs(np.roots(a)) >= 1):
        raise InvalidParameterError("servo gains give an unstable closed loop")
    return signal.lfilter(b, a, np.asarray(laser_noise, dtype=float))
