"""Closed-form optics of the ring cavity and the crossed-field rods.

Sign conventions: the propagation unit vector is the clockwise direction.
A rod with ``sign_b = +1`` has its magnetic field pointing up, and
``sign_e = +1`` means the inner electrode is grounded. Zero means the rod is
disconnected. The reference configuration (every sign +1) yields a positive
cw-minus-ccw splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (
    InsensitiveConfigurationError,
    InvalidParameterError,
    UnsupportedConfigurationError,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact
EARTH_ROTATION_RATE = 7.2921159e-5  # rad/s
LAB_LATITUDE = math.radians(43.0)
PLANCK = 6.62607015e-34  # J s, exact
FINE_STRUCTURE = 1 / 137.035999084
ATMOSPHERE = 101_325.0  # Pa
AMBIENT_TEMPERATURE = 293.15  # K

_SIGNS = (-1, 0, 1)


def _require_positive(name, value):
    if not (value > 0) or not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class RingCavity:
    """Square ring resonator. The arm length is a quarter of the perimeter."""

    perimeter: float = 1.6
    finesse: float = 30_000.0
    wavelength: float = 1.064e-6

    def __post_init__(self):
        _require_positive("perimeter", self.perimeter)
        _require_positive("wavelength", self.wavelength)
        if not (self.finesse >= 1) or not math.isfinite(self.finesse):
            raise InvalidParameterError(f"finesse must be >= 1, got {self.finesse!r}")

    @property
    def arm_length(self) -> float:
        return self.perimeter / 4

    @property
    def optical_frequency(self) -> float:
        return SPEED_OF_LIGHT / self.wavelength


@dataclass(frozen=True)
class Rod:
    """One E x B field region on a cavity arm."""

    length: float = 0.20
    b_field: float = 0.85
    gap: float = 4e-3
    voltage: float = 2000.0
    sign_b: int = 1
    sign_e: int = 1

    def __post_init__(self):
        _require_positive("rod length", self.length)
        _require_positive("electrode gap", self.gap)
        if not (self.b_field >= 0):
            raise InvalidParameterError(f"b_field must be >= 0, got {self.b_field!r}")
        if not math.isfinite(self.voltage):
            raise InvalidParameterError("voltage must be finite")
        for name in ("sign_b", "sign_e"):
            if getattr(self, name) not in _SIGNS:
                raise InvalidParameterError(f"{name} must be one of -1, 0, +1")

    @property
    def e_field(self) -> float:
        return self.voltage / self.gap

    @property
    def sign(self) -> int:
        return self.sign_b * self.sign_e


@dataclass(frozen=True)
class RodAssembly:
    rods: tuple[Rod, ...]

    def __post_init__(self):
        rods = tuple(self.rods)
        if len(rods) != 4:
            raise UnsupportedConfigurationError(
                f"the rod assembly holds exactly 4 rods, got {len(rods)}"
            )
        object.__setattr__(self, "rods", rods)

    @classmethod
    def from_signs(cls, sign_e: Sequence[int], sign_b: Sequence[int], **rod_kwargs):
        if len(sign_e) != 4 or len(sign_b) != 4:
            raise UnsupportedConfigurationError("need 4 E signs and 4 B signs")
        return cls(tuple(Rod(sign_e=int(e), sign_b=int(b), **rod_kwargs)
                         for e, b in zip(sign_e, sign_b)))

    @classmethod
    def reference(cls, **rod_kwargs):
        return cls.from_signs((1, 1, 1, 1), (1, 1, 1, 1), **rod_kwargs)

    @property
    def sign_e(self) -> tuple[int, ...]:
        return tuple(r.sign_e for r in self.rods)

    @property
    def sign_b(self) -> tuple[int, ...]:
        return tuple(r.sign_b for r in self.rods)

    @property
    def label(self) -> str:
        sym = {1: "+", -1: "-", 0: "0"}
        e = "".join(sym[s] for s in self.sign_e)
        b = "".join(sym[s] for s in self.sign_b)
        return f"E{e}/B{b}"

    def with_signs(self, sign_e, sign_b) -> "RodAssembly":
        return RodAssembly(tuple(replace(r, sign_e=int(e), sign_b=int(b))
                                 for r, e, b in zip(self.rods, sign_e, sign_b)))

    def with_field(self, e_field: float) -> "RodAssembly":
        """Same rods, every electrode pair driven to the field ``e_field`` (V/m)."""
        return RodAssembly(tuple(replace(r, voltage=e_field * r.gap) for r in self.rods))

    def common_length(self) -> float:
        lengths = {r.length for r in self.rods}
        if len(lengths) != 1:
            raise UnsupportedConfigurationError(
                f"rods of different lengths are not supported: {sorted(lengths)}"
            )
        return lengths.pop()

    def signed_field_sum(self) -> float:
        """Sum over rods of sign * B, in tesla."""
        return math.fsum(r.sign * r.b_field for r in self.rods)

    def connected_length(self) -> float:
        return math.fsum(r.length for r in self.rods if r.sign != 0)


@dataclass(frozen=True)
class GasMedium:
    name: str = "N2"
    two_eta_parallel: float = 4.7e-23  # m/(V T)
    two_eta_perp: float | None = None
    pressure: float = ATMOSPHERE
    temperature: float = AMBIENT_TEMPERATURE

    def __post_init__(self):
        _require_positive("pressure", self.pressure)
        _require_positive("temperature", self.temperature)


@dataclass(frozen=True)
class SagnacContext:
    earth_rate: float = EARTH_ROTATION_RATE
    latitude: float = LAB_LATITUDE

    def __post_init__(self):
        if abs(self.latitude) > math.pi / 2:
            raise InvalidParameterError("latitude must lie in [-pi/2, pi/2]")
        if self.earth_rate < 0:
            raise InvalidParameterError("earth rotation rate must be >= 0")


def free_spectral_range(cavity: RingCavity) -> float:
    _require_positive("perimeter", cavity.perimeter)
    return SPEED_OF_LIGHT / cavity.perimeter


def linewidth_fwhm(cavity: RingCavity) -> float:
    if not cavity.finesse >= 1:
        raise InvalidParameterError("finesse must be >= 1")
    return free_spectral_range(cavity) / cavity.finesse


def sagnac_split(cavity: RingCavity, ctx: SagnacContext = SagnacContext()) -> float:
    """DC cw/ccw resonance splitting (Hz) caused by the rotation of the Earth."""
    return cavity.arm_length / cavity.wavelength * ctx.earth_rate * math.cos(ctx.latitude)


def rod_delta_n(rod: Rod, gas: GasMedium) -> float:
    """cw minus ccw refractive index difference inside one rod."""
    return rod.sign * gas.two_eta_parallel * rod.e_field * rod.b_field


def cavity_split(cavity: RingCavity, assembly: RodAssembly, gas: GasMedium) -> float:
    """cw minus ccw resonance splitting (Hz) produced by the rods at their present fields."""
    rod_length = assembly.common_length()
    index_sum = math.fsum(rod_delta_n(r, gas) for r in assembly.rods)
    return cavity.optical_frequency * rod_length / cavity.perimeter * index_sum


def split_per_field(cavity: RingCavity, assembly: RodAssembly, gas: GasMedium) -> float:
    """Splitting per unit applied electric field, Hz per (V/m)."""
    return cavity_split(cavity, assembly.with_field(1.0), gas)


def eta_from_slope(slope: float, cavity: RingCavity, assembly: RodAssembly) -> float:
    """Magnitude of 2*eta_parallel (m/(V T)) from a splitting-versus-field slope.

    Use :func:`relative_sign` for the sign with respect to the reference
    configuration.
    """
    field_sum = assembly.signed_field_sum()
    if field_sum == 0:
        raise InsensitiveConfigurationError(
            f"configuration {assembly.label} cancels (sum of signed B is 0); "
            "it is insensitive to eta"
        )
    rod_length = assembly.common_length()
    return abs(slope) / cavity.optical_frequency * cavity.perimeter / rod_length / abs(field_sum)


def relative_sign(slope: float, assembly: RodAssembly) -> int:
    """+1 if the slope has the sign the reference configuration would give for this assembly."""
    return int(np.sign(slope) * np.sign(assembly.signed_field_sum()))


def ideal_gas_rescale(constant: float, from_state: tuple[float, float],
                      to_state: tuple[float, float]) -> float:
    """Rescale a density-proportional optical constant between (pressure, temperature) states."""
    (p_from, t_from), (p_to, t_to) = from_state, to_state
    for name, v in (("pressure", p_from), ("temperature", t_from),
                    ("pressure", p_to), ("temperature", t_to)):
        _require_positive(name, v)
    return constant * (p_to / p_from) * (t_from / t_to)


def shot_noise_asd(cavity: RingCavity, power: float) -> float:
    """Shot-noise limited PDH frequency noise (Hz/sqrt(Hz)) for ``power`` watts on the detector."""
    _require_positive("power", power)
    return linewidth_fwhm(cavity) / 4 * math.sqrt(PLANCK * cavity.optical_frequency / power)
