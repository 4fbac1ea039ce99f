"""Synthetic experiments: single runs, E-field sweeps, sign campaigns and calibration."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CalibrationError, CampaignError, InvalidParameterError
from .optics import (
    GasMedium,
    RingCavity,
    RodAssembly,
    SagnacContext,
    sagnac_split,
    split_per_field,
)
from .signal_chain import (
    LockInParams,
    NoiseModel,
    PDHParams,
    ServoParams,
    check_modulation,
    derive_seed,
    eom_calibration_signal,
    generate_noise,
    lock_in_demodulate,
    pdh_discriminant,
    pdh_error,
    servo_residual,
)

log = logging.getLogger(__name__)

MAX_E_FIELD = 0.5e6  # V/m, hardware limit of the HV amplifier and 4 mm gap
REFERENCE_DURATION = 2000.0  # s

# (sign_E, sign_B) rows of the field-configuration test campaign; reference first.
TABLE1_CONFIGS = (
    ((1, 1, 1, 1), (1, 1, 1, 1)),
    ((-1, -1, -1, -1), (1, 1, 1, 1)),
    ((1, 1, -1, -1), (1, 1, -1, -1)),
    ((1, 1, -1, 0), (1, 1, -1, -1)),
    ((-1, -1, 0, 0), (1, 1, 1, 1)),
    ((0, 1, 0, -1), (1, 1, -1, -1)),
    ((1, 0, 0, 0), (1, 1, 1, 1)),
    ((1, -1, 0, 0), (1, 1, 1, 1)),
    ((1, 1, 1, 1), (1, 1, -1, -1)),
)
# measured relative effect and its sigma, as published for the rows above
TABLE1_PUBLISHED = (
    (1.0, 0.0), (-1.08, 0.21), (0.92, 0.19), (0.85, 0.24), (-0.50, 0.09),
    (0.47, 0.11), (0.27, 0.04), (0.07, 0.2), (0.16, 0.13),
)
# two rods with B up and outer electrode grounded, two with B down and inner grounded
FIG2_SIGNS = ((-1, -1, 1, 1), (1, 1, -1, -1))
FIG2_E_VALUES = tuple(k * 1e5 for k in range(-4, 5))


@dataclass(frozen=True)
class RunConfig:
    cavity: RingCavity = field(default_factory=RingCavity)
    assembly: RodAssembly = field(default_factory=RodAssembly.reference)
    gas: GasMedium = field(default_factory=GasMedium)
    e_amplitude: float = 0.5e6
    pdh: PDHParams = field(default_factory=PDHParams)
    lockin: LockInParams = field(default_factory=LockInParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    servo: ServoParams = field(default_factory=ServoParams)
    sagnac: SagnacContext = field(default_factory=SagnacContext)
    duration: float = REFERENCE_DURATION
    seed: int = 0
    calibration_injection: float = 10e-3  # Hz; 0 means exact calibration from the discriminant

    def __post_init__(self):
        if self.duration <= self.lockin.settling_time:
            raise InvalidParameterError(
                f"duration {self.duration} s must exceed 10 lock-in time constants "
                f"({self.lockin.settling_time} s)"
            )
        if self.servo.sample_rate <= 2 * self.lockin.reference_freq:
            raise InvalidParameterError("sample rate must exceed twice the modulation frequency f_E")
        if self.calibration_injection < 0:
            raise InvalidParameterError("calibration injection must be >= 0")
        if abs(self.e_amplitude) > MAX_E_FIELD:
            warnings.warn(f"E amplitude {self.e_amplitude:.3g} V/m exceeds the 0.5 MV/m the rods reach",
                          stacklevel=3)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.servo.sample_rate))

    def without_noise(self) -> "RunConfig":
        return replace(self, noise=replace(self.noise, white_split_noise_asd=0.0, drift_rate=0.0,
                                           laser_noise_asd=0.0))


def compress(config: RunConfig, duration: float, *, time_constant: float | None = None,
             sample_rate: float | None = None,
             reference_duration: float = REFERENCE_DURATION) -> RunConfig:
    """Shorter run with the same statistical sigma as ``reference_duration``.

    The split-noise ASD is rescaled by sqrt(settled / reference settled) so the
    demodulated standard error is preserved.
    """
    lockin = config.lockin if time_constant is None else replace(config.lockin,
                                                                 time_constant=time_constant)
    servo = config.servo if sample_rate is None else replace(config.servo, sample_rate=sample_rate)
    ref_settled = reference_duration - config.lockin.settling_time
    new_settled = duration - lockin.settling_time
    if new_settled <= 0 or ref_settled <= 0:
        raise InvalidParameterError("compressed duration leaves no settled data")
    scale = math.sqrt(new_settled / ref_settled)
    noise = replace(config.noise, white_split_noise_asd=config.noise.white_split_noise_asd * scale)
    return replace(config, lockin=lockin, servo=servo, noise=noise, duration=duration)


class Calibration(NamedTuple):
    factor: float  # Hz per demodulated V
    sigma: float
    injected: float
    demodulated: float

    @property
    def rel_sigma(self) -> float:
        return self.sigma / abs(self.factor)


@dataclass
class RunResult:
    delta_nu_fE: float
    sigma_stat: float
    calibration: Calibration
    e_amplitude: float
    seed: int
    quadrature: float = 0.0
    dc_error_signal: float = 0.0
    dc_split_estimate: float = 0.0
    series: dict | None = None

    @property
    def calibration_factor(self) -> float:
        return self.calibration.factor


class MeasurementPoint(NamedTuple):
    e_amplitude: float
    delta_nu: float
    sigma: float


@dataclass
class MeasurementSeries:
    points: list[MeasurementPoint]
    config_label: str
    calibration: Calibration | None = None
    seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len({p.e_amplitude for p in self.points}) < 2:
            raise InvalidParameterError("a measurement series needs at least 2 distinct E values")
        if any(p.sigma < 0 for p in self.points):
            raise InvalidParameterError("point sigmas must be >= 0")

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def arrays(self):
        a = np.array(self.points, dtype=float)
        return a[:, 0], a[:, 1], a[:, 2]


def exact_calibration(config: RunConfig) -> Calibration:
    disc = pdh_discriminant(config.cavity, config.pdh, require_nonzero=True)
    return Calibration(1.0 / disc, 0.0, 0.0, 0.0)


def calibrate(config: RunConfig, injected_amplitude: float | None = None, *,
              seed: int | None = None) -> Calibration:
    """Measure Hz per demodulated volt with an EOM-injected modulation of known amplitude."""
    amplitude = config.calibration_injection if injected_amplitude is None else injected_amplitude
    if not amplitude > 0:
        raise InvalidParameterError("calibration needs an injected amplitude > 0")
    disc = pdh_discriminant(config.cavity, config.pdh, require_nonzero=True)
    noise = None
    if not config.noise.is_silent:
        cal_seed = derive_seed(config.seed, "calibration") if seed is None else seed
        noise = replace(config.noise, seed=cal_seed)
    fs = config.servo.sample_rate
    trace = eom_calibration_signal(amplitude, config.lockin.reference_freq, disc,
                                   config.duration, fs, noise)
    demod = lock_in_demodulate(trace, fs, config.lockin)
    if noise is not None and abs(demod.in_phase) < 3 * demod.sigma:
        raise CalibrationError(
            f"calibration SNR {abs(demod.in_phase) / demod.sigma:.2f} < 3; "
            "raise the injected amplitude or the duration"
        )
    factor = amplitude / demod.in_phase
    sigma = 0.0 if noise is None else abs(factor) * demod.sigma / abs(demod.in_phase)
    return Calibration(factor, sigma, amplitude, demod.in_phase)


def _default_calibration(config: RunConfig) -> Calibration:
    if config.calibration_injection > 0:
        return calibrate(config)
    return exact_calibration(config)


def simulate_run(config: RunConfig, calibration: Calibration | None = None, *,
                 keep_series: bool = False) -> RunResult:
    """One lock-in measurement of the cw-ccw splitting at f_E.

    ``calibration`` lets several runs share one EOM calibration, as in a
    measurement session; by default each run calibrates itself.
    """
    check_modulation(config.cavity, config.pdh)
    if calibration is None:
        calibration = _default_calibration(config)
    fs = config.servo.sample_rate
    n = config.n_samples
    t = np.arange(n) / fs
    e_field = config.e_amplitude * np.sin(2 * np.pi * config.lockin.reference_freq * t)
    k = split_per_field(config.cavity, config.assembly, config.gas)
    split = sagnac_split(config.cavity, config.sagnac) + k * e_field
    noise = replace(config.noise, seed=config.seed)
    if not noise.is_silent:
        split = split + generate_noise(noise, n, fs)
    full_loop = config.servo.mode == "full-loop"
    noiseless = noise.is_silent and not (full_loop and noise.laser_noise_asd > 0)

    if config.servo.small_signal:
        disc = pdh_discriminant(config.cavity, config.pdh)
        error = lambda d: disc * d  # noqa: E731
    else:
        error = lambda d: pdh_error(config.cavity, config.pdh, d)  # noqa: E731

    if not full_loop:
        cw_detuning = np.zeros(n)
        ccw_detuning = split
        signal_v = error(ccw_detuning)
    else:
        laser = (generate_noise(noise, n, fs, stream="laser")
                 if noise.laser_noise_asd > 0 else np.zeros(n))
        cw_detuning = servo_residual(laser, config.servo)
        ccw_detuning = cw_detuning + split
        signal_v = error(ccw_detuning) - error(cw_detuning)

    demod = lock_in_demodulate(signal_v, fs, config.lockin)
    dc = float(np.mean(signal_v))
    series = None
    if keep_series:
        series = {"time_s": t, "e_field_V_per_m": e_field, "detuning_ccw_Hz": ccw_detuning,
                  "error_signal_V": signal_v}
    return RunResult(
        delta_nu_fE=demod.in_phase * calibration.factor,
        sigma_stat=0.0 if noiseless else demod.sigma * abs(calibration.factor),
        calibration=calibration,
        e_amplitude=config.e_amplitude,
        seed=config.seed,
        quadrature=demod.quadrature * calibration.factor,
        dc_error_signal=dc,
        dc_split_estimate=dc * calibration.factor,
        series=series,
    )


def _run_indexed(args):
    config, calibration = args
    return simulate_run(config, calibration)


def run_many(configs: Sequence[RunConfig], calibration: Calibration | None = None,
             jobs: int = 1) -> list[RunResult]:
    """Run independent configurations, optionally in worker processes; output keeps input order."""
    work = [(c, calibration) for c in configs]
    if jobs <= 1 or len(work) <= 1:
        return [_run_indexed(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_indexed, work))


def sweep_e(config: RunConfig, e_values: Sequence[float], *,
            calibration: Calibration | None = None, jobs: int = 1) -> MeasurementSeries:
    """One run per field amplitude; point ``i`` uses seed ``derive_seed(config.seed, i)``."""
    e_values = [float(e) for e in e_values]
    if len(e_values) < 2 or len(set(e_values)) < 2:
        raise InvalidParameterError("an E sweep needs at least 2 distinct field values")
    if calibration is None:
        calibration = _default_calibration(config)
    seeds = [derive_seed(config.seed, i) for i in range(len(e_values))]
    configs = [replace(config, e_amplitude=e, seed=s) for e, s in zip(e_values, seeds)]
    results = run_many(configs, calibration, jobs)
    points = [MeasurementPoint(e, r.delta_nu_fE, r.sigma_stat) for e, r in zip(e_values, results)]
    return MeasurementSeries(points, config.assembly.label, calibration, seeds)


class CampaignRow(NamedTuple):
    sign_e: tuple
    sign_b: tuple
    measured: float
    sigma: float
    expected: float
    delta_nu: float
    sigma_delta_nu: float


def campaign_table1(base: RunConfig, configs=TABLE1_CONFIGS, *,
                    calibration: Calibration | None = None, jobs: int = 1) -> list[CampaignRow]:
    """Relative effect of each sign configuration, normalized to the all-plus reference."""
    from .analysis import relative_effect

    configs = [(tuple(e), tuple(b)) for e, b in configs]
    if not configs or configs[0] != ((1, 1, 1, 1), (1, 1, 1, 1)):
        raise CampaignError("the first configuration must be the all-plus reference")
    if calibration is None:
        calibration = _default_calibration(base)
    run_configs = [replace(base, assembly=base.assembly.with_signs(e, b),
                           seed=derive_seed(base.seed, i))
                   for i, (e, b) in enumerate(configs)]
    results = run_many(run_configs, calibration, jobs)
    ref = results[0]
    if ref.delta_nu_fE == 0 or (ref.sigma_stat > 0 and abs(ref.delta_nu_fE) < ref.sigma_stat):
        raise CampaignError(
            f"reference split {ref.delta_nu_fE:.3g} Hz is not resolved "
            f"(sigma {ref.sigma_stat:.3g} Hz); cannot normalize the campaign"
        )
    rows = []
    for i, ((e, b), r) in enumerate(zip(configs, results)):
        if i == 0:
            measured, sigma = 1.0, 0.0
        else:
            measured = r.delta_nu_fE / ref.delta_nu_fE
            sigma = math.hypot(r.sigma_stat, measured * ref.sigma_stat) / abs(ref.delta_nu_fE)
        rows.append(CampaignRow(e, b, measured, sigma, relative_effect(e, b),
                                r.delta_nu_fE, r.sigma_stat))
    return rows
