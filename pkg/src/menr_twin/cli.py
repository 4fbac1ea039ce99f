"""``menr-twin`` command line: run | sweep | campaign | analyze | calibrate | project-vacuum."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import tomli

from . import __version__
from .analysis import (
    CALIBRATION_REL_SIGMA,
    FIELDS_REL_SIGMA,
    EtaEstimate,
    FitResult,
    combine_estimates,
    extract_eta,
    smallest_resolvable_delta_n,
    vacuum_projection,
    weighted_linear_fit,
)
from .config import build_run_config, config_hash, load_config, with_overrides
from .errors import ConfigError, InvalidParameterError, MENRError
from .experiment import (
    FIG2_E_VALUES,
    TABLE1_CONFIGS,
    TABLE1_PUBLISHED,
    Calibration,
    calibrate,
    campaign_table1,
    simulate_run,
    sweep_e,
)
from .io import (
    SCHEMA_VERSION,
    errorbar_svg,
    read_json,
    write_csv,
    write_json,
    write_series_csv,
    write_svg,
)
from .optics import RingCavity, shot_noise_asd

log = logging.getLogger("menr_twin")

VACUUM_TARGET_DEFAULTS = {
    "perimeter_m": 1.6,
    "finesse": 200_000.0,
    "wavelength_m": 1.064e-6,
    "fill_factor": 0.5,
    "laser_power_W": 0.05,
    "noise_floor_asd_Hz_per_rtHz": None,  # None: shot-noise floor at laser_power_W
    "b_field_T": 0.85,
    "e_field_V_per_m": 0.5e6,
    "measured_b_field_T": 0.85,
    "measured_e_field_V_per_m": 0.5e6,
}


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (datetime.fromtimestamp(int(epoch), timezone.utc) if epoch
           else datetime.now(timezone.utc))
    return now.replace(microsecond=0).isoformat()


def _metadata(resolved, seed):
    return {
        "config_hash": config_hash(resolved) if resolved is not None else None,
        "seed": seed,
        "timestamp": _timestamp(),
        "package_version": __version__,
    }


def _record(kind, resolved, seed, **body):
    rec = {"schema_version": SCHEMA_VERSION, "kind": kind, "metadata": _metadata(resolved, seed)}
    if resolved is not None:
        rec["config"] = resolved
    rec.update(body)
    return rec


def _calibration_dict(cal: Calibration):
    return {"factor_Hz_per_V": cal.factor, "sigma_Hz_per_V": cal.sigma,
            "rel_sigma": cal.rel_sigma, "injected_Hz": cal.injected}


def _load(args):
    base, resolved = load_config(args.config)
    resolved = with_overrides(resolved, seed=args.seed, duration=args.duration,
                              no_noise=args.no_noise, time_constant=args.time_constant,
                              sample_rate=args.sample_rate)
    if args.preserve_snr and not args.no_noise:
        # rescale the split noise so the shortened run keeps the original sigma
        old = base.duration - base.lockin.settling_time
        new = resolved["run"]["duration_s"] - 10 * resolved["lockin"]["time_constant_s"]
        if new > 0:
            resolved["noise"]["split_noise_asd_Hz_per_rtHz"] *= math.sqrt(new / old)
    return build_run_config(resolved), resolved


def cmd_run(args):
    config, resolved = _load(args)
    result = simulate_run(config, keep_series=args.series)
    out = Path(args.out)
    try:
        dn, sdn = smallest_resolvable_delta_n(result, config.cavity, config.assembly)
    except InvalidParameterError:
        dn = sdn = None
    record = _record("run", resolved, config.seed, config_label=config.assembly.label, result={
        "e_amplitude_V_per_m": config.e_amplitude,
        "delta_nu_fE_Hz": result.delta_nu_fE,
        "sigma_stat_Hz": result.sigma_stat,
        "quadrature_Hz": result.quadrature,
        "dc_split_estimate_Hz": result.dc_split_estimate,
        "calibration": _calibration_dict(result.calibration),
        "delta_n": dn,
        "sigma_delta_n": sdn,
    })
    path = write_json(out / "run.json", record)
    if args.series:
        write_series_csv(out / "series.csv", result.series)
    print(f"delta_nu_fE = {result.delta_nu_fE:.6g} +- {result.sigma_stat:.3g} Hz -> {path}")
    return 0


def _parse_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidParameterError(f"cannot parse field values {text!r}") from None


def cmd_sweep(args):
    config, resolved = _load(args)
    e_values = _parse_floats(args.e_values) if args.e_values else list(FIG2_E_VALUES)
    series = sweep_e(config, e_values, jobs=args.jobs)
    fit = weighted_linear_fit(series, through_origin=args.through_origin)
    try:
        eta = extract_eta(fit, config.cavity, config.assembly,
                          series.calibration.rel_sigma, FIELDS_REL_SIGMA).to_dict()
    except MENRError:
        eta = None
    out = Path(args.out)
    e, dnu, sig = series.arrays
    write_csv(out / "sweep.csv", {"e_amplitude_V_per_m": e, "delta_nu_Hz": dnu, "sigma_Hz": sig})
    points = [{"e_amplitude_V_per_m": p.e_amplitude, "delta_nu_Hz": p.delta_nu,
               "sigma_Hz": p.sigma, "seed": s} for p, s in zip(series.points, series.seeds)]
    record = _record("sweep", resolved, config.seed, config_label=series.config_label,
                     points=points, fit=fit.to_dict(),
                     calibration=_calibration_dict(series.calibration), eta=eta)
    write_json(out / "sweep.json", record)
    write_svg(out / "sweep.svg", errorbar_svg(
        e, dnu, sig, line=(fit.slope, fit.intercept),
        title=f"cw-ccw splitting vs E ({series.config_label})",
        xlabel="E amplitude (V/m)", ylabel="splitting at f_E (Hz)"))
    print(f"slope = {fit.slope:.4g} +- {fit.slope_sigma:.2g} Hz m/V, chi2/dof = {fit.chi2_per_dof:.3g}")
    if eta is not None:
        print(f"|2 eta| = {eta['value']:.3g} (stat {eta['sigma_stat']:.2g})")
    return 0


def cmd_campaign(args):
    config, resolved = _load(args)
    rows = campaign_table1(config, TABLE1_CONFIGS, jobs=args.jobs)
    sym = {1: "+", -1: "-", 0: "0"}
    lines = [f"{'rods':>4}  {'E':>4}  {'B':>4}  {'measured':>16}  {'expected':>8}  {'published':>14}"]
    records = []
    for row, (pub, pub_s) in zip(rows, TABLE1_PUBLISHED):
        n_rods = sum(1 for e in row.sign_e if e != 0)
        e = "".join(sym[s] for s in row.sign_e)
        b = "".join(sym[s] for s in row.sign_b)
        lines.append(f"{n_rods:>4}  {e:>4}  {b:>4}  {row.measured:+8.3f} +- {row.sigma:5.3f}  "
                     f"{row.expected:+8.2f}  {pub:+6.2f} +- {pub_s:4.2f}")
        records.append({"sign_E": list(row.sign_e), "sign_B": list(row.sign_b),
                        "measured": row.measured, "sigma": row.sigma, "expected": row.expected,
                        "delta_nu_Hz": row.delta_nu, "sigma_delta_nu_Hz": row.sigma_delta_nu,
                        "published": pub, "published_sigma": pub_s})
    text = "\n".join(lines) + "\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "campaign.txt").write_text(text, encoding="utf-8", newline="\n")
    write_json(out / "campaign.json", _record("campaign", resolved, config.seed, rows=records))
    print(text, end="")
    return 0


def cmd_calibrate(args):
    config, resolved = _load(args)
    cal = calibrate(config, args.amplitude)
    write_json(Path(args.out) / "calibration.json",
               _record("calibration", resolved, config.seed, calibration=_calibration_dict(cal)))
    print(f"calibration = {cal.factor:.6g} +- {cal.sigma:.2g} Hz/V ({100 * cal.rel_sigma:.2f} %)")
    return 0


def _eta_from_record(path, rec, calib_mode, calib_rel_sigma):
    if "config" not in rec:
        raise InvalidParameterError(f"{path}: record carries no configuration")
    config = build_run_config(rec["config"])
    if rec.get("kind") == "sweep":
        fit = FitResult(**rec["fit"])
        rel = rec["calibration"]["rel_sigma"]
    elif rec.get("kind") == "run":
        res = rec["result"]
        e = res["e_amplitude_V_per_m"]
        if e == 0:
            raise InvalidParameterError(f"{path}: run at zero field carries no slope")
        fit = FitResult(res["delta_nu_fE_Hz"] / e, res["sigma_stat_Hz"] / abs(e), 0.0, 0.0, 0.0, 1,
                        True)
        rel = res["calibration"]["rel_sigma"]
    else:
        raise InvalidParameterError(f"{path}: expected a run or sweep record, got {rec.get('kind')!r}")
    if calib_mode == "global":
        rel = calib_rel_sigma
    est = extract_eta(fit, config.cavity, config.assembly, rel, 0.0)
    return est, rec.get("config_label", config.assembly.label)


def cmd_analyze(args):
    entries = []
    for path in args.results:
        rec = read_json(path)
        est, label = _eta_from_record(path, rec, args.calib_mode, args.calib_rel_sigma)
        entries.append((str(path), label, est))
    labels = sorted({label for _, label, _ in entries})
    if len(labels) > 1 and not args.allow_mixed:
        raise InvalidParameterError(
            f"inputs mix rod configurations {labels}; pass --allow-mixed to combine them")
    mean = combine_estimates([e for _, _, e in entries])
    final = None
    if args.final_eta:
        final = EtaEstimate(mean.value, mean.sigma_stat, mean.sigma_calib,
                            args.fields_rel_sigma * mean.value)
    runs = [{"source": src, "config_label": label, "value": e.value, "sigma_stat": e.sigma_stat,
             "sigma_calib": e.sigma_calib} for src, label, e in entries]
    out = Path(args.out)
    write_json(out / "eta.json", _record(
        "eta_report", None, None, runs=runs, weighted_mean=mean.to_dict(),
        final=final.to_dict() if final else None, calib_mode=args.calib_mode))
    sig = [math.hypot(e.sigma_stat, e.sigma_calib) for _, _, e in entries]
    write_svg(out / "eta.svg", errorbar_svg(
        list(range(1, len(entries) + 1)), [e.value for _, _, e in entries], sig,
        hline=(mean.value, mean.sigma_total), title="2 eta_parallel per run",
        xlabel="run", ylabel="2 eta (m/(V T))"))
    print(f"weighted mean 2 eta = {mean.value:.3g} +- {mean.sigma_total:.2g} m/(V T)")
    if final:
        print(f"final 2 eta = {final.value:.3g} +- {final.sigma_total:.2g} m/(V T)")
    return 0


def _load_vacuum_target(path):
    target = dict(VACUUM_TARGET_DEFAULTS)
    notes = []
    if path is None:
        notes.append("no target config given; documented defaults used")
        return target, notes
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    section = doc.get("target", {})
    extra = set(doc) - {"target"}
    if extra:
        raise ConfigError(f"unknown sections {sorted(extra)}", section=sorted(extra)[0])
    for key, value in section.items():
        if key not in target:
            raise ConfigError("unknown key", section="target", key=key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", section="target", key=key)
        target[key] = float(value)
    missing = sorted(k for k in VACUUM_TARGET_DEFAULTS if k not in section)
    if missing:
        notes.append("defaults used for: " + ", ".join(missing))
    return target, notes


def cmd_project_vacuum(args):
    target, notes = _load_vacuum_target(args.target_config)
    cavity = RingCavity(target["perimeter_m"], target["finesse"], target["wavelength_m"])
    floor = target["noise_floor_asd_Hz_per_rtHz"]
    if floor is None:
        floor = shot_noise_asd(cavity, target["laser_power_W"])
        notes.append("noise floor is the shot-noise limit at laser_power_W")
    field_scale = (target["b_field_T"] * target["e_field_V_per_m"]
                   / (target["measured_b_field_T"] * target["measured_e_field_V_per_m"]))
    proj = vacuum_projection(args.measured_delta_n, args.suppression, cavity, floor,
                             fill_factor=target["fill_factor"], field_scale=field_scale)
    record = _record(
        "projection", None, None,
        inputs={"measured_delta_n": args.measured_delta_n, "suppression": args.suppression,
                "field_scale": field_scale, "noise_floor_asd_Hz_per_rtHz": floor, "target": target},
        target_delta_n=proj.target_delta_n, target_delta_nu_Hz=proj.target_delta_nu,
        required_time_s=None if proj.infinite_time else proj.required_time,
        infinite_time=proj.infinite_time, notes=notes)
    write_json(Path(args.out) / "projection.json", record)
    print(f"target delta n = {proj.target_delta_n:.3g}, splitting = {proj.target_delta_nu:.3g} Hz, "
          f"time for SNR 1 = {proj.required_time:.3g} s")
    for note in notes:
        print(f"note: {note}")
    return 0


def _add_common(p):
    p.add_argument("config", nargs="?", help="TOML experiment config (defaults if omitted)")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--duration", type=float, help="override [run] duration_s")
    p.add_argument("--time-constant", type=float, help="override [lockin] time_constant_s")
    p.add_argument("--sample-rate", type=float, help="override [servo] sample_rate_Hz")
    p.add_argument("--no-noise", action="store_true", help="switch off all noise sources")
    p.add_argument("--preserve-snr", action="store_true",
                   help="scale the split noise so a shortened run keeps the configured sigma")


def _jobs(p):
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for independent runs")


def build_parser():
    parser = argparse.ArgumentParser(prog="menr-twin", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one lock-in measurement")
    _add_common(p)
    p.add_argument("--series", action="store_true", help="also write the raw time series CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="splitting versus E amplitude, with weighted fit")
    _add_common(p)
    _jobs(p)
    p.add_argument("--e-values", help="comma separated amplitudes in V/m "
                                      "(default -4e5..4e5 in 1e5 steps)")
    p.add_argument("--through-origin", action="store_true", help="fit without intercept")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("campaign", help="rod sign-configuration campaign")
    _add_common(p)
    _jobs(p)
    p.add_argument("--table1", action="store_true", default=True,
                   help="the nine reference configurations (the only campaign provided)")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("calibrate", help="EOM calibration of the error signal")
    _add_common(p)
    p.add_argument("--amplitude", type=float, help="injected splitting amplitude in Hz")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("analyze", help="combine run/sweep records into 2 eta_parallel")
    p.add_argument("results", nargs="+", help="run.json or sweep.json files")
    p.add_argument("--out", default="out")
    p.add_argument("--final-eta", action="store_true",
                   help="add the field-determination uncertainty to the weighted mean")
    p.add_argument("--allow-mixed", action="store_true",
                   help="combine records from different rod configurations")
    p.add_argument("--calib-mode", choices=("per-run", "global"), default="per-run")
    p.add_argument("--calib-rel-sigma", type=float, default=CALIBRATION_REL_SIGMA,
                   help="relative calibration sigma used with --calib-mode global")
    p.add_argument("--fields-rel-sigma", type=float, default=FIELDS_REL_SIGMA)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("project-vacuum", help="scale the measurement to the quantum-vacuum effect")
    p.add_argument("--suppression", type=float, default=7e8)
    p.add_argument("--measured-delta-n", type=float, default=2e-17)
    p.add_argument("--target-config", help="TOML file with a [target] table")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_project_vacuum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f"{args.config}:" if getattr(args, "config", None) else ""
        print(f"error: {where}{exc}", file=sys.stderr)
        return 2
    except (MENRError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
