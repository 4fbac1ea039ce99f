"""Fits, uncertainty budgets and the physics cross-checks built on them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidParameterError, MENRError, SingularFitError
from .optics import (
    FINE_STRUCTURE,
    RingCavity,
    RodAssembly,
    eta_from_slope,
    relative_sign,
)

# Default relative uncertainty of the B and E field determination. Not a measured
# number: it is what turns a +-0.4 weighted-mean uncertainty on 4.7 into +-1 in quadrature.
FIELDS_REL_SIGMA = 0.195
CALIBRATION_REL_SIGMA = 0.10


@dataclass(frozen=True)
class FitResult:
    slope: float
    slope_sigma: float
    intercept: float
    intercept_sigma: float
    chi2_per_dof: float
    n_points: int
    through_origin: bool = False

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EtaEstimate:
    value: float
    sigma_stat: float
    sigma_calib: float
    sigma_fields: float
    sign: int = 1

    @property
    def sigma_total(self) -> float:
        return math.sqrt(self.sigma_stat**2 + self.sigma_calib**2 + self.sigma_fields**2)

    def to_dict(self):
        return {**asdict(self), "sigma_total": self.sigma_total}


@dataclass(frozen=True)
class Constant:
    value: float
    source: str


@dataclass(frozen=True)
class ConstantsTable:
    """Magneto- and electro-optical constants of N2 near 1 atm and room temperature."""

    kerr: Constant = Constant(1.4e-25, "experiment")  # m^2 V^-2
    cotton_mouton: Constant = Constant(-2.1e-13, "experiment")  # T^-2
    mejb: Constant = Constant(9.0e-23, "ab initio, 633 nm")  # m V^-1 T^-1
    menr_parallel: Constant = Constant(4.7e-23, "experiment")  # m V^-1 T^-1

    def __post_init__(self):
        for name in ("kerr", "cotton_mouton", "mejb", "menr_parallel"):
            if not math.isfinite(getattr(self, name).value):
                raise InvalidParameterError(f"{name} must be finite")


class VacuumProjection(NamedTuple):
    target_delta_n: float
    target_delta_nu: float
    required_time: float
    infinite_time: bool


def _as_arrays(points):
    if hasattr(points, "arrays"):
        return points.arrays
    a = np.asarray(list(points), dtype=float)
    if a.ndim != 2 or a.shape[1] != 3:
        raise InvalidParameterError("points must be (x, y, sigma) triples")
    return a[:, 0], a[:, 1], a[:, 2]


def weighted_linear_fit(points, *, through_origin: bool = False) -> FitResult:
    """Weighted least squares y = slope*x + intercept with weights 1/sigma^2.

    Parameter sigmas come from the unscaled normal-equation covariance. If every
    sigma is zero (noiseless data) the fit is ordinary least squares and all
    parameter sigmas and chi2 are reported as zero.
    """
    x, y, s = _as_arrays(points)
    if x.size < 2:
        raise SingularFitError("need at least 2 points to fit a line")
    if np.any(s < 0):
        raise InvalidParameterError("sigmas must be >= 0")
    exact = bool(np.all(s == 0))
    if not exact and np.any(s == 0):
        raise InvalidParameterError("mixing zero and non-zero sigmas is not supported")
    if np.ptp(x) == 0:
        raise SingularFitError("all abscissae are identical; the slope is undetermined")
    w = np.ones_like(x) if exact else 1.0 / s**2
    if through_origin:
        design = x[:, None]
    else:
        design = np.column_stack([x, np.ones_like(x)])
    normal = design.T @ (w[:, None] * design)
    cov = np.linalg.inv(normal)
    params = cov @ (design.T @ (w * y))
    resid = y - design @ params
    dof = x.size - design.shape[1]
    if exact:
        cov = np.zeros_like(cov)
        chi2 = 0.0
    else:
        chi2 = float(np.sum(w * resid**2)) / dof if dof > 0 else 0.0
    slope = float(params[0])
    intercept = 0.0 if through_origin else float(params[1])
    intercept_sigma = 0.0 if through_origin else math.sqrt(cov[1, 1])
    return FitResult(slope, math.sqrt(cov[0, 0]), intercept, intercept_sigma,
                     chi2, int(x.size), through_origin)


def weighted_mean(values: Iterable[tuple[float, float]]) -> tuple[float, float]:
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise InvalidParameterError("weighted mean of an empty set")
    x, s = vals[:, 0], vals[:, 1]
    if np.any(s <= 0):
        raise InvalidParameterError("weighted mean needs sigmas > 0")
    w = 1.0 / s**2
    return float(np.sum(w * x) / np.sum(w)), float(1.0 / math.sqrt(np.sum(w)))


def extract_eta(fit: FitResult, cavity: RingCavity, assembly: RodAssembly,
                calib_rel_sigma: float = CALIBRATION_REL_SIGMA,
                fields_rel_sigma: float = FIELDS_REL_SIGMA) -> EtaEstimate:
    """2*eta_parallel with its statistical, calibration and field-determination sigmas."""
    value = eta_from_slope(fit.slope, cavity, assembly)
    return EtaEstimate(
        value=value,
        sigma_stat=eta_from_slope(fit.slope_sigma, cavity, assembly),
        sigma_calib=calib_rel_sigma * value,
        sigma_fields=fields_rel_sigma * value,
        sign=relative_sign(fit.slope, assembly) or 1,
    )


def combine_estimates(estimates: Sequence[EtaEstimate],
                      fields_rel_sigma: float = 0.0) -> EtaEstimate:
    """Inverse-variance mean of per-run estimates.

    Each run is weighted by its statistical and calibration sigmas combined;
    the variance of the mean is split back into those two parts. The field
    determination sigma is common to all runs and is applied to the mean.
    """
    if not estimates:
        raise InvalidParameterError("no estimates to combine")
    stat = np.array([e.sigma_stat for e in estimates])
    cal = np.array([e.sigma_calib for e in estimates])
    value, _ = weighted_mean((e.value, math.hypot(sa, ca))
                             for e, sa, ca in zip(estimates, stat, cal))
    w = 1.0 / (stat**2 + cal**2)
    return EtaEstimate(
        value=value,
        sigma_stat=float(math.sqrt(np.sum(w**2 * stat**2)) / np.sum(w)),
        sigma_calib=float(math.sqrt(np.sum(w**2 * cal**2)) / np.sum(w)),
        sigma_fields=fields_rel_sigma * value,
    )


def relative_effect(sign_e: Sequence[int], sign_b: Sequence[int]) -> float:
    """Expected splitting of a sign configuration relative to the all-plus reference."""
    if len(sign_e) != len(sign_b):
        raise InvalidParameterError("sign lists differ in length")
    if any(s not in (-1, 0, 1) for s in (*sign_e, *sign_b)):
        raise InvalidParameterError("signs must be -1, 0 or +1")
    return sum(e * b for e, b in zip(sign_e, sign_b)) / 4


def alpha_ratio_check(constants: ConstantsTable = ConstantsTable(),
                      alpha: float = FINE_STRUCTURE) -> tuple[float, float]:
    """Scale alpha*sqrt(Kerr*|Cotton-Mouton|) and how far the measured MENR falls below it."""
    kerr, cm = constants.kerr.value, constants.cotton_mouton.value
    menr = constants.menr_parallel.value
    if kerr < 0 or cm == 0:
        raise InvalidParameterError("need kerr >= 0 and a non-zero Cotton-Mouton constant")
    if menr == 0:
        raise MENRError("MENR constant is zero; the suppression ratio is undefined")
    predicted = alpha * math.sqrt(kerr * abs(cm))
    return predicted, predicted / abs(menr)


def vacuum_projection(measured_delta_n: float, suppression: float, cavity_target: RingCavity,
                      noise_floor_asd: float, *, fill_factor: float = 0.5,
                      field_scale: float = 1.0) -> VacuumProjection:
    """Index difference, splitting and SNR-1 averaging time for a much weaker effect.

    ``field_scale`` multiplies the scaled index difference by the target E*B over
    the measured E*B; ``fill_factor`` is the fraction of the perimeter in field.
    """
    if not suppression > 0:
        raise InvalidParameterError("suppression must be > 0")
    if noise_floor_asd < 0:
        raise InvalidParameterError("noise floor must be >= 0")
    target_dn = measured_delta_n / suppression * field_scale
    target_dnu = cavity_target.optical_frequency * target_dn * fill_factor
    if target_dnu == 0:
        return VacuumProjection(target_dn, 0.0, math.inf, True)
    return VacuumProjection(target_dn, target_dnu, (noise_floor_asd / target_dnu) ** 2, False)


def smallest_resolvable_delta_n(run, cavity: RingCavity,
                                assembly: RodAssembly) -> tuple[float, float]:
    """In-rod index difference (and sigma) corresponding to a run's demodulated splitting."""
    length = assembly.connected_length()
    if length == 0:
        raise InvalidParameterError("no rod is connected")
    scale = cavity.perimeter / length / cavity.optical_frequency
    return run.delta_nu_fE * scale, run.sigma_stat * scale
