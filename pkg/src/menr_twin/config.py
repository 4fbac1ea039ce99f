"""TOML experiment configuration: schema, defaults, validation and canonical hashing.

Every key carries its unit as a suffix (``perimeter_m``, ``time_constant_s``).
Unknown keys are rejected, missing sections and keys take the defaults below.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path

import tomli

from .errors import ConfigError, MENRError
from .experiment import RunConfig
from .optics import GasMedium, RingCavity, Rod, RodAssembly, SagnacContext
from .signal_chain import LockInParams, NoiseModel, PDHParams, ServoParams

NUMBER = "number"
INTEGER = "integer"
STRING = "string"
BOOLEAN = "boolean"
SIGN = "sign"

# section -> key -> (type, default); a default of None means optional and absent.
SCHEMA = {
    "cavity": {
        "perimeter_m": (NUMBER, 1.6),
        "finesse": (NUMBER, 30_000.0),
        "wavelength_m": (NUMBER, 1.064e-6),
    },
    "rods": {
        "length_m": (NUMBER, 0.20),
        "b_field_T": (NUMBER, 0.85),
        "gap_m": (NUMBER, 4e-3),
        "voltage_V": (NUMBER, 2000.0),
        "sign_B": (SIGN, 1),
        "sign_E": (SIGN, 1),
    },
    "gas": {
        "name": (STRING, "N2"),
        "two_eta_parallel_m_per_V_T": (NUMBER, 4.7e-23),
        "two_eta_perp_m_per_V_T": (NUMBER, None),
        "pressure_Pa": (NUMBER, 101_325.0),
        "temperature_K": (NUMBER, 293.15),
    },
    "pdh": {
        "mod_frequency_Hz": (NUMBER, 12e6),
        "mod_depth_rad": (NUMBER, 1.08),
        "input_coupler_reflectivity": (NUMBER, None),
        "round_trip_amplitude": (NUMBER, None),
        "detector_gain_V_per_W": (NUMBER, 1.0),
    },
    "lockin": {
        "reference_frequency_Hz": (NUMBER, 18.5),
        "time_constant_s": (NUMBER, 10.0),
        "filter_order": (INTEGER, 4),
        "reference_phase_rad": (NUMBER, 0.0),
    },
    "noise": {
        "split_noise_asd_Hz_per_rtHz": (NUMBER, 8.9e-3),
        "drift_rate_Hz_per_s": (NUMBER, 0.0),
        "laser_noise_asd_Hz_per_rtHz": (NUMBER, 1.0),
    },
    "servo": {
        "mode": (STRING, "ideal-lock"),
        "proportional_gain": (NUMBER, 0.3),
        "integral_gain_per_s": (NUMBER, 200.0),
        "actuator_bandwidth_Hz": (NUMBER, 500.0),
        "sample_rate_Hz": (NUMBER, 2000.0),
        "small_signal": (BOOLEAN, False),
    },
    "sagnac": {
        "earth_rate_rad_per_s": (NUMBER, 7.2921159e-5),
        "latitude_deg": (NUMBER, 43.0),
    },
    "run": {
        "e_amplitude_V_per_m": (NUMBER, 0.5e6),
        "duration_s": (NUMBER, 2000.0),
        "seed": (INTEGER, 0),
        "calibration_injection_Hz": (NUMBER, 10e-3),
    },
}


def _locate(text: str, section: str, key: str | None = None, index: int | None = None):
    """1-based line of ``key`` in ``section`` (or of the section header), if present."""
    current, count, header_line = None, -1, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\[\s*([\w.-]+)\s*\]\]", line) or re.match(r"^\[\s*([\w.-]+)\s*\]", line)
        if m:
            current = m.group(1)
            if current == section:
                count += 1
                if index is None or count == index:
                    header_line = header_line or lineno
                    if key is None:
                        return lineno
            continue
        if key is not None and current == section and (index is None or count == index):
            if re.match(rf"^{re.escape(key)}\s*=", line):
                return lineno
    return header_line


def _check_type(kind, value):
    if kind == NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    if kind == INTEGER:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == SIGN:
        return isinstance(value, int) and not isinstance(value, bool) and value in (-1, 0, 1)
    if kind == STRING:
        return isinstance(value, str)
    if kind == BOOLEAN:
        return isinstance(value, bool)
    raise AssertionError(kind)


def _fill_section(name, given, text, index=None):
    if not isinstance(given, dict):
        raise ConfigError("expected a table", section=name, line=_locate(text, name))
    schema = SCHEMA[name]
    out = {}
    for key, value in given.items():
        if key not in schema:
            hint = ""
            close = [k for k in schema if k.split("_")[0] == key.split("_")[0]]
            if close:
                hint = f" (did you mean {close[0]!r}? keys carry their unit suffix)"
            raise ConfigError(f"unknown key{hint}", section=name, key=key,
                              line=_locate(text, name, key, index))
        kind = schema[key][0]
        if not _check_type(kind, value):
            raise ConfigError(f"expected a {kind}, got {value!r}", section=name, key=key,
                              line=_locate(text, name, key, index))
        out[key] = float(value) if kind == NUMBER else value
    for key, (_, default) in schema.items():
        if key not in out and default is not None:
            out[key] = default
    return out


def parse_config_text(text: str) -> dict:
    """Validate a TOML document and return the fully resolved, defaulted mapping."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", line=int(m.group(1)) if m else None) from None
    for name in doc:
        if name not in SCHEMA:
            raise ConfigError("unknown section", section=name, line=_locate(text, name))
    resolved = {}
    for name in SCHEMA:
        if name == "rods":
            continue
        resolved[name] = _fill_section(name, doc.get(name, {}), text)
    rods = doc.get("rods")
    if rods is None:
        rods = [{} for _ in range(4)]
    if not isinstance(rods, list):
        raise ConfigError("[rods] must be an array of tables ([[rods]])", section="rods",
                          line=_locate(text, "rods"))
    if len(rods) != 4:
        raise ConfigError(f"exactly 4 rods are required, found {len(rods)}", section="rods",
                          line=_locate(text, "rods"))
    resolved["rods"] = [_fill_section("rods", r, text, i) for i, r in enumerate(rods)]
    # checks values against the domain types
    build_run_config(resolved, text=text)
    return resolved


def build_run_config(resolved: dict, *, text: str = "") -> RunConfig:
    def section(name, fn, index=None):
        try:
            return fn(resolved[name] if index is None else resolved[name][index])
        except MENRError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), section=name, line=_locate(text, name, index=index)) from None

    cavity = section("cavity", lambda s: RingCavity(s["perimeter_m"], s["finesse"], s["wavelength_m"]))
    rods = tuple(
        section("rods", lambda s: Rod(s["length_m"], s["b_field_T"], s["gap_m"], s["voltage_V"],
                                      s["sign_B"], s["sign_E"]), i)
        for i in range(len(resolved["rods"]))
    )
    assembly = section("rods", lambda _: RodAssembly(rods))
    gas = section("gas", lambda s: GasMedium(s["name"], s["two_eta_parallel_m_per_V_T"],
                                             s.get("two_eta_perp_m_per_V_T"),
                                             s["pressure_Pa"], s["temperature_K"]))
    pdh = section("pdh", lambda s: PDHParams(2 * math.pi * s["mod_frequency_Hz"], s["mod_depth_rad"],
                                             s.get("input_coupler_reflectivity"),
                                             s.get("round_trip_amplitude"),
                                             s["detector_gain_V_per_W"]))
    lockin = section("lockin", lambda s: LockInParams(s["reference_frequency_Hz"], s["time_constant_s"],
                                                      s["filter_order"], s["reference_phase_rad"]))
    run = resolved["run"]
    noise = section("noise", lambda s: NoiseModel(s["split_noise_asd_Hz_per_rtHz"],
                                                  s["drift_rate_Hz_per_s"],
                                                  s["laser_noise_asd_Hz_per_rtHz"], run["seed"]))
    servo = section("servo", lambda s: ServoParams(s["mode"], s["proportional_gain"],
                                                   s["integral_gain_per_s"],
                                                   s["actuator_bandwidth_Hz"],
                                                   s["sample_rate_Hz"], s["small_signal"]))
    sagnac = section("sagnac", lambda s: SagnacContext(s["earth_rate_rad_per_s"],
                                                       math.radians(s["latitude_deg"])))
    return section("run", lambda s: RunConfig(cavity, assembly, gas, s["e_amplitude_V_per_m"], pdh,
                                              lockin, noise, servo, sagnac, s["duration_s"],
                                              s["seed"], s["calibration_injection_Hz"]))


def load_config(path: str | Path | None = None) -> tuple[RunConfig, dict]:
    """RunConfig and resolved mapping from a file; ``None`` gives the defaults."""
    text = "" if path is None else Path(path).read_text(encoding="utf-8")
    resolved = parse_config_text(text)
    return build_run_config(resolved, text=text), resolved


def _normalize(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, float):
        return repr(obj)
    if isinstance(obj, int):
        return repr(float(obj))
    if isinstance(obj, dict):
        return {k: _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    raise TypeError(type(obj))


def canonical_json(resolved: dict) -> str:
    return json.dumps(_normalize(resolved), sort_keys=True, separators=(",", ":"))


def config_hash(resolved: dict) -> str:
    """SHA-256 of the canonical configuration, seed excluded."""
    body = {k: v for k, v in resolved.items() if k != "run"}
    body["run"] = {k: v for k, v in resolved["run"].items() if k != "seed"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


def config_from_run(config: RunConfig) -> dict:
    """Resolved mapping for an in-memory RunConfig (inverse of :func:`build_run_config`)."""
    c, g, p, li, n, s, sg = (config.cavity, config.gas, config.pdh, config.lockin,
                             config.noise, config.servo, config.sagnac)
    out = {
        "cavity": {"perimeter_m": c.perimeter, "finesse": c.finesse, "wavelength_m": c.wavelength},
        "rods": [{"length_m": r.length, "b_field_T": r.b_field, "gap_m": r.gap,
                  "voltage_V": r.voltage, "sign_B": r.sign_b, "sign_E": r.sign_e}
                 for r in config.assembly.rods],
        "gas": {"name": g.name, "two_eta_parallel_m_per_V_T": g.two_eta_parallel,
                "pressure_Pa": g.pressure, "temperature_K": g.temperature},
        "pdh": {"mod_frequency_Hz": p.mod_frequency, "mod_depth_rad": p.mod_depth,
                "detector_gain_V_per_W": p.detector_gain},
        "lockin": {"reference_frequency_Hz": li.reference_freq, "time_constant_s": li.time_constant,
                   "filter_order": li.filter_order, "reference_phase_rad": li.reference_phase},
        "noise": {"split_noise_asd_Hz_per_rtHz": n.white_split_noise_asd,
                  "drift_rate_Hz_per_s": n.drift_rate,
                  "laser_noise_asd_Hz_per_rtHz": n.laser_noise_asd},
        "servo": {"mode": s.mode, "proportional_gain": s.proportional_gain,
                  "integral_gain_per_s": s.integral_gain,
                  "actuator_bandwidth_Hz": s.actuator_bandwidth, "sample_rate_Hz": s.sample_rate,
                  "small_signal": s.small_signal},
        "sagnac": {"earth_rate_rad_per_s": sg.earth_rate, "latitude_deg": math.degrees(sg.latitude)},
        "run": {"e_amplitude_V_per_m": config.e_amplitude, "duration_s": config.duration,
                "seed": config.seed, "calibration_injection_Hz": config.calibration_injection},
    }
    if g.two_eta_perp is not None:
        out["gas"]["two_eta_perp_m_per_V_T"] = g.two_eta_perp
    if p.input_coupler_reflectivity is not None:
        out["pdh"]["input_coupler_reflectivity"] = p.input_coupler_reflectivity
    if p.round_trip_amplitude is not None:
        out["pdh"]["round_trip_amplitude"] = p.round_trip_amplitude
    return out


def with_overrides(resolved: dict, *, seed=None, duration=None, no_noise=False,
                   time_constant=None, sample_rate=None) -> dict:
    out = json.loads(json.dumps(resolved))
    if seed is not None:
        out["run"]["seed"] = int(seed)
    if duration is not None:
        out["run"]["duration_s"] = float(duration)
    if time_constant is not None:
        out["lockin"]["time_constant_s"] = float(time_constant)
    if sample_rate is not None:
        out["servo"]["sample_rate_Hz"] = float(sample_rate)
    if no_noise:
        out["noise"].update(split_noise_asd_Hz_per_rtHz=0.0, drift_rate_Hz_per_s=0.0,
                            laser_noise_asd_Hz_per_rtHz=0.0)
    return out


def with_rod_signs(resolved: dict, sign_e, sign_b) -> dict:
    out = json.loads(json.dumps(resolved))
    for rod, e, b in zip(out["rods"], sign_e, sign_b):
        rod["sign_E"], rod["sign_B"] = int(e), int(b)
    return out


__all__ = ["SCHEMA", "load_config", "parse_config_text", "build_run_config", "config_hash",
           "canonical_json", "config_from_run", "with_overrides", "with_rod_signs"]
