"""Command-line experiment runner.

Subcommands
-----------
``run``      simulate a tilt sweep (or reproduce a figure) and write CSV/JSON
``compare``  fit SNR_a = m * SNR_b through the origin for two results tables
``analyze``  run the spectral pipeline on a saved time-tag file

Config files are flat JSON objects using the dotted keys of
:meth:`SimulationConfig.to_flat` (``"source.acquisition_time": 10``) plus
the run keys ``mode``, ``seed``, ``repeats``, ``tilt_sweep_urad``,
``timetags`` and ``workers``.  Command-line flags override the file.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import model, reshaping
from .analysis import (
    DEFAULT_BIN_WIDTH,
    SpectrumResult,
    fit_through_origin,
    loglog_slope,
    measure_snr,
)
from .config import Mode, SimulationConfig
from .errors import InvalidConfig, MismatchedSweeps, WVAError
from .montecarlo import derive_seed, mode_config, simulate_config
from .timetags import read_timetags, write_timetags

log = logging.getLogger(__name__)

DEFAULT_SWEEP_URAD = (1.5, 3.0, 4.5, 6.0, 7.5)
FULL_SCALE_DURATION = 300.0
PHOTON_SWEEP_FACTORS = (0.1, 0.3, 1.0, 3.0, 10.0)
_MODE_CODE = {Mode.CONVENTIONAL: 0, Mode.SINGLE: 1, Mode.MULTI: 2}
_RUN_KEYS = {"mode", "seed", "repeats", "tilt_sweep_urad", "timetags", "workers"}
CSV_COLUMNS = ("mode", "repeat", "tilt_peak_to_peak_urad", "detected_photons",
               "signal", "noise", "snr")


@dataclass(frozen=True)
class RunConfig:
    base: SimulationConfig = field(default_factory=SimulationConfig)
    modes: tuple = (Mode.MULTI,)
    tilt_sweep: tuple = tuple(t * 1e-6 for t in DEFAULT_SWEEP_URAD)  # peak, radians
    repeats: int = 1
    out: Path = Path("results")
    timetags: str = "first"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(Mode(m) for m in self.modes))
        if self.repeats < 1:
            raise InvalidConfig("repeats must be >= 1")
        if not self.tilt_sweep or any(t < 0 for t in self.tilt_sweep):
            raise InvalidConfig("tilt sweep must be a non-empty list of non-negative tilts")
        if self.timetags not in ("all", "first", "none"):
            raise InvalidConfig("timetags must be one of all, first, none")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    mode: Mode
    repeat: int
    tilt: float
    result: SpectrumResult
    input_photons: float

    def csv_row(self):
        r = self.result
        return (self.mode.value, self.repeat, repr(round(2e6 * self.tilt, 9)), r.detected_photons,
                repr(r.signal_amplitude), repr(r.noise_floor), repr(r.snr))


@dataclass(frozen=True)
class BoostReport:
    slope: float
    stderr: float
    n_points: int


def align_duration(duration: float, drive_frequency: float,
                   bin_width: float = DEFAULT_BIN_WIDTH) -> float:
    """Nearest duration holding whole drive periods and whole bins (at least two periods)."""
    period = Fraction(1 / drive_frequency).limit_denominator(10**9)
    width = Fraction(bin_width).limit_denominator(10**9)
    step = _lcm_fraction(period, width)
    n = max(round(Fraction(duration) / step), math.ceil(2 * period / step), 1)
    return float(n * step)


def _lcm_fraction(a: Fraction, b: Fraction) -> Fraction:
    den = math.lcm(a.denominator, b.denominator)
    return Fraction(math.lcm(int(a * den), int(b * den)), den)


def compare(results_a, results_b) -> BoostReport:
    """Least-squares slope through the origin of SNR_a against SNR_b.

    Inputs are sequences of ``(tilt, repeat, snr)`` (or :class:`RunRecord`)
    that must cover the same sweep points.
    """
    a, b = _snr_by_point(results_a), _snr_by_point(results_b)
    if set(a) != set(b):
        raise MismatchedSweeps("result sets cover different (tilt, repeat) points")
    keys = sorted(a)
    slope, err = fit_through_origin([b[k] for k in keys], [a[k] for k in keys])
    return BoostReport(slope, err, len(keys))


def _snr_by_point(rows):
    out = {}
    for row in rows:
        if isinstance(row, RunRecord):
            key, snr = (round(row.tilt * 1e12), row.repeat), row.result.snr
        else:
            tilt, rep, snr = row
            key = (round(float(tilt) * 1e12), int(rep))
        if key in out:
            raise MismatchedSweeps(f"duplicate sweep point {key}")
        out[key] = float(snr)
    return out


def _run_one(task):
    cfg, tilt, repeat, seed, tt_path = task
    cfg = cfg.replace(seed=seed, **{"drive.tilt_amplitude_peak": tilt})
    tags = simulate_config(cfg)
    if tt_path is not None:
        write_timetags(tags, tt_path)
    src = cfg.source
    return RunRecord(cfg.mode, repeat, tilt, measure_snr(tags),
                     src.mean_photons_per_pulse * src.n_pulses)


def _tasks(run: RunConfig, base: SimulationConfig, modes, tilts, tag_dir, label=""):
    tasks = []
    for mode in modes:
        cfg = mode_config(base, mode)
        for i, tilt in enumerate(tilts):
            for rep in range(run.repeats):
                seed = derive_seed(base.seed, _MODE_CODE[mode], i, rep)
                path = None
                if tag_dir is not None and (run.timetags == "all"
                                            or (run.timetags == "first" and rep == 0)):
                    path = tag_dir / f"{label}{mode.value}_tilt{i}_rep{rep}.tt"
                tasks.append((cfg, tilt, rep, seed, path))
    return tasks


def _execute(tasks, workers):
    if workers == 1:
        return [_run_one(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, tasks))


def tilt_sweep_records(run: RunConfig, modes=None) -> list[RunRecord]:
    """Simulate and analyze every (mode, tilt, repeat) point, in that order."""
    tag_dir = None
    if run.timetags != "none":
        tag_dir = run.out / "timetags"
        tag_dir.mkdir(parents=True, exist_ok=True)
    return _execute(_tasks(run, run.base, modes or run.modes, run.tilt_sweep, tag_dir),
                    run.workers)


def summarize_sweep(records) -> dict:
    """Per-mode slope fits and pairwise boosts for a tilt sweep."""
    by_mode = {}
    for rec in records:
        by_mode.setdefault(rec.mode, []).append(rec)
    modes = {}
    for mode, recs in by_mode.items():
        tilt_pp = np.array([2e6 * r.tilt for r in recs])
        sig = np.array([r.result.signal_amplitude for r in recs])
        counts = np.array([r.result.signal_counts for r in recs]) / np.array([r.input_photons for r in recs])
        snr = np.array([r.result.snr for r in recs])
        s_slope, s_err = fit_through_origin(tilt_pp, sig)
        c_slope, c_err = fit_through_origin(tilt_pp, counts)
        n_slope, n_err = fit_through_origin(tilt_pp, snr)
        levels = np.unique(tilt_pp)
        means = np.array([sig[tilt_pp == t].mean() for t in levels])
        modes[mode.value] = {
            "signal_slope_per_urad": s_slope,
            "signal_slope_stderr": s_err,
            "signal_per_input_photon_slope_per_urad": c_slope,
            "signal_per_input_photon_slope_stderr": c_err,
            "snr_slope_per_urad": n_slope,
            "snr_slope_stderr": n_err,
            "mean_detected_photons": float(np.mean([r.result.detected_photons for r in recs])),
            "mean_photon_detections": float(np.mean([r.result.photon_detections for r in recs])),
            "linearity_r_squared": _r_squared(levels, means) if levels.size > 2 else None,
        }
    ratios = {}
    for num, den in ((Mode.MULTI, Mode.SINGLE), (Mode.SINGLE, Mode.CONVENTIONAL),
                     (Mode.MULTI, Mode.CONVENTIONAL)):
        if num.value in modes and den.value in modes:
            a, b = modes[num.value], modes[den.value]
            rep = compare(by_mode[num], by_mode[den])
            ratios[f"{num.value}/{den.value}"] = {
                "count_boost": a["mean_photon_detections"] / b["mean_photon_detections"],
                "signal_boost": (a["signal_per_input_photon_slope_per_urad"]
                                 / b["signal_per_input_photon_slope_per_urad"]),
                "signal_boost_stderr": _ratio_err(
                    a["signal_per_input_photon_slope_per_urad"], a["signal_per_input_photon_slope_stderr"],
                    b["signal_per_input_photon_slope_per_urad"], b["signal_per_input_photon_slope_stderr"]),
                "snr_boost": rep.slope,
                "snr_boost_stderr": rep.stderr,
            }
    return {"modes": modes, "ratios": ratios}


def _ratio_err(a, da, b, db):
    return abs(a / b) * math.hypot(da / a, db / b)


def _r_squared(x, y):
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0


def photon_sweep_records(run: RunConfig, modes, factors=PHOTON_SWEEP_FACTORS,
                         tilt: float | None = None):
    """Records at fixed tilt for acquisition times ``factor * base duration``."""
    tilt = run.base.drive.tilt_amplitude_peak if tilt is None else tilt
    base_t = run.base.source.acquisition_time
    f = run.base.drive.drive_frequency
    # the 100 noise offsets at 1/T spacing must stay above 0 Hz
    shortest = base_t * min(factors)
    if shortest <= 50.0 / f:
        raise InvalidConfig(f"photon sweep needs every duration > {50.0 / f:g} s; "
                            f"shortest is {shortest:g} s (increase --duration)")
    out = []
    for j, factor in enumerate(factors):
        dur = align_duration(base_t * factor, f)
        base = run.base.replace(**{"source.acquisition_time": dur},
                                seed=derive_seed(run.base.seed, 100 + j))
        for rec in _execute(_tasks(run, base, modes, (tilt,), None), run.workers):
            out.append((dur, rec))
    return out


def summarize_photon_sweep(rows) -> dict:
    out = {}
    for mode in {rec.mode for _, rec in rows}:
        sel = [(d, r) for d, r in rows if r.mode is mode]
        durs = sorted({d for d, _ in sel})
        n_in = [np.mean([r.input_photons for d2, r in sel if d2 == d]) for d in durs]
        n_det = [np.mean([r.result.detected_photons for d2, r in sel if d2 == d]) for d in durs]
        noise = [np.mean([r.result.noise_floor for d2, r in sel if d2 == d]) for d in durs]
        snr = [np.mean([r.result.snr for d2, r in sel if d2 == d]) for d in durs]
        out[mode.value] = {
            "noise_vs_detected_loglog_slope": loglog_slope(n_det, noise),
            "snr_vs_input_loglog_slope": loglog_slope(n_in, snr),
            "snr_per_sqrt_input_photon": float(np.mean(np.array(snr) / np.sqrt(n_in))),
        }
    return dict(sorted(out.items()))


def analytic_tables(base: SimulationConfig, tilts) -> tuple[list, list, dict]:
    """Closed-form recycling table, beam profiles and boost summary (no Monte Carlo)."""
    ifo = base.interferometer
    p, r = ifo.p, ifo.max_passes
    lossy = model.RecyclingParams(p, ifo.gamma, r)
    fractions = np.cumsum(model.detected_fraction_per_pass(lossy))
    table = []
    for n in range(1, r + 1):
        lossless = model.RecyclingParams(p, 0.0, n)
        small = model.snr_gain_small_p(p, n) if p * (n - 1) < 1 else float("nan")
        table.append((n, repr(model.recycled_power_fraction(lossless)),
                      repr(model.snr_gain(lossless)), repr(small),
                      repr(float(fractions[n - 1])), repr(float(fractions[n - 1] / fractions[0]))))
    n0 = reshaping.BeamProfile.gaussian(ifo.beam_sigma)
    k_max = ifo.kick(max(tilts))
    params = ifo.reshaping(max(tilts))
    lossless = reshaping.ReshapingParams(ifo.phi, k_max, 0.0, False)
    cols = [n0.density,
            reshaping.density_pass(n0, params, 1).density,
            reshaping.density_accumulated(n0, params, r).density,
            reshaping.density_infinite(n0, reshaping.ReshapingParams(ifo.phi, k_max, ifo.gamma)).density,
            reshaping.density_infinite(n0, lossless).density,
            reshaping.density_flipped_infinite(n0, lossless).density]
    profiles = [tuple(repr(float(c[i])) for c in [n0.x] + cols) for i in range(0, n0.n_points, 16)]
    boosts = reshaping.sweep_boosts(n0, params, [ifo.kick(t) for t in tilts], r)
    summary = {
        "postselection_probability": p,
        "weak_value_imag": model.weak_value(model.TwoPathState.sagnac_initial(ifo.phi),
                                            model.TwoPathState.sagnac_dark_port(),
                                            model.PathOperator.which_path()).imag,
        "lossless_snr_gain": model.snr_gain(model.RecyclingParams(p, 0.0, r)),
        "lossless_snr_gain_limit": model.snr_gain_limit(p),
        "count_boost": model.count_boost(lossy),
        "reshaped_count_boost": boosts.count_boost,
        "reshaped_shift_ratio": boosts.shift_ratio,
        "reshaped_signal_boost": boosts.signal_boost,
        "reshaped_snr_boost_sweep": boosts.snr_boost,
        "reshaped_snr_boost_max_tilt": reshaping.reshaped_snr_boost(
            n0, params, r, base.detector.detector_sigma),
        "kick_sigma_at_max_tilt": k_max * ifo.beam_sigma,
    }
    return table, profiles, summary


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_results_csv(path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise InvalidConfig(f"{path}: missing columns {sorted(missing)}")
        return [(row["mode"], float(row["tilt_peak_to_peak_urad"]) / 2e6, int(row["repeat"]),
                 float(row["snr"])) for row in reader]


def execute_run(run: RunConfig, reproduce: str | None = None, analytic_only: bool = False) -> dict:
    run.out.mkdir(parents=True, exist_ok=True)
    summary = {"config": run.base.to_flat(),
               "tilt_sweep_urad_peak": [round(t * 1e6, 9) for t in run.tilt_sweep],
               "repeats": run.repeats}
    table, profiles, analytic = analytic_tables(run.base, run.tilt_sweep)
    summary["analytic"] = analytic
    if analytic_only:
        summary.pop("config")
        summary["config"] = {k: v for k, v in run.base.to_flat().items() if k != "seed"}
        _write_csv(run.out / "recycling_table.csv",
                   ("passes", "recycled_power_fraction", "snr_gain", "snr_gain_small_p",
                    "lossy_detected_fraction", "lossy_count_boost"), table)
        _write_csv(run.out / "profiles.csv",
                   ("x_m", "n0", "pass1", "accumulated", "infinite_lossy",
                    "infinite_lossless", "flipped_infinite_lossless"), profiles)
        _write_json(run.out / "summary.json", summary)
        return summary

    if reproduce in (None, "fig2a", "fig3b"):
        modes = run.modes if reproduce is None else (Mode.SINGLE, Mode.MULTI)
        records = tilt_sweep_records(run, modes)
        _write_csv(run.out / "results.csv", CSV_COLUMNS, [r.csv_row() for r in records])
        summary.update(summarize_sweep(records))
    else:
        modes = (Mode.SINGLE, Mode.MULTI) if reproduce == "fig2b" else tuple(Mode)
        rows = photon_sweep_records(run, modes)
        _write_csv(run.out / f"{reproduce}.csv",
                   ("mode", "repeat", "duration_s", "input_photons", "detected_photons",
                    "signal", "noise", "snr"),
                   [(r.mode.value, r.repeat, repr(d), repr(r.input_photons),
                     r.result.detected_photons, repr(r.result.signal_amplitude),
                     repr(r.result.noise_floor), repr(r.result.snr)) for d, r in rows])
        summary["photon_sweep"] = summarize_photon_sweep(rows)
    if reproduce:
        summary["reproduce"] = reproduce
    _write_json(run.out / "summary.json", summary)
    return summary


def _parse_sweep(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise InvalidConfig(f"bad tilt sweep {text!r}") from exc
    return tuple(v * 1e-6 for v in vals)


def _parse_modes(text: str) -> tuple:
    names = [m.strip() for m in str(text).split(",") if m.strip()]
    if names == ["all"]:
        return tuple(Mode)
    try:
        modes = tuple(Mode(m) for m in names)
    except ValueError as exc:
        raise InvalidConfig(f"unknown mode in {text!r}") from exc
    if not modes or len(set(modes)) != len(modes):
        raise InvalidConfig(f"bad mode list {text!r}")
    return modes


def build_run_config(args) -> RunConfig:
    file_cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise InvalidConfig("config file must hold a JSON object")
    sim_keys = {k: v for k, v in file_cfg.items() if k not in _RUN_KEYS}
    base = SimulationConfig.from_flat(sim_keys)
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    duration = args.duration
    if duration is None and args.full_scale:
        duration = FULL_SCALE_DURATION
    if duration is None:
        duration = base.source.acquisition_time
    duration = align_duration(duration, base.drive.drive_frequency)
    modes = _parse_modes(args.mode or file_cfg.get("mode", "multi"))
    base = base.replace(seed=seed, mode=modes[-1], **{"source.acquisition_time": duration})
    sweep = (_parse_sweep(args.tilt_sweep) if args.tilt_sweep
             else tuple(float(v) * 1e-6 for v in file_cfg.get("tilt_sweep_urad", DEFAULT_SWEEP_URAD)))
    return RunConfig(
        base=base,
        modes=modes,
        tilt_sweep=sweep,
        repeats=args.repeats if args.repeats is not None else int(file_cfg.get("repeats", 1)),
        out=Path(args.out),
        timetags=args.timetags or file_cfg.get("timetags", "first"),
        workers=args.workers if args.workers is not None else int(file_cfg.get("workers", 1)),
    )


def _cmd_run(args) -> int:
    run = build_run_config(args)
    summary = execute_run(run, args.reproduce, args.analytic_only)
    for key, val in summary.get("ratios", {}).items():
        print(f"{key}: signal boost {val['signal_boost']:.3f} +/- {val['signal_boost_stderr']:.3f}, "
              f"SNR boost {val['snr_boost']:.3f} +/- {val['snr_boost_stderr']:.3f}, "
              f"count boost {val['count_boost']:.3f}")
    a = summary["analytic"]
    print(f"analytic: count boost {a['reshaped_count_boost']:.3f}, "
          f"signal boost {a['reshaped_signal_boost']:.3f}, SNR boost {a['reshaped_snr_boost_sweep']:.3f}")
    print(f"wrote {run.out}")
    return 0


def _cmd_compare(args) -> int:
    rows_a, rows_b = read_results_csv(args.results_a), read_results_csv(args.results_b)
    if args.mode_a:
        rows_a = [r for r in rows_a if r[0] == args.mode_a]
    if args.mode_b:
        rows_b = [r for r in rows_b if r[0] == args.mode_b]
    rep = compare([r[1:] for r in rows_a], [r[1:] for r in rows_b])
    print(json.dumps({"slope": rep.slope, "stderr": rep.stderr, "n_points": rep.n_points},
                     sort_keys=True))
    return 0


def _cmd_analyze(args) -> int:
    tags = read_timetags(args.timetag_file)
    res = measure_snr(tags, args.drive_frequency, args.bin_width * 1e-6)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recycled-wva",
                                     description="Recycled weak-value amplification simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a tilt sweep and analyze it")
    run.add_argument("--mode", help="conventional, single, multi, a comma list of them, or all")
    run.add_argument("--tilt-sweep", help="comma-separated peak tilts in urad")
    run.add_argument("--seed", type=int)
    run.add_argument("--repeats", type=int)
    run.add_argument("--duration", type=float, help="acquisition time per run, seconds")
    run.add_argument("--config", help="flat JSON config file")
    run.add_argument("--reproduce", choices=["fig2a", "fig2b", "fig3a", "fig3b"])
    run.add_argument("--analytic-only", action="store_true")
    run.add_argument("--full-scale", action="store_true", help="300 s acquisitions")
    run.add_argument("--out", default="results")
    run.add_argument("--workers", type=int)
    run.add_argument("--timetags", choices=["all", "first", "none"],
                     help="which runs get a time-tag file (default: first repeat)")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="SNR boost of results A over results B")
    cmp_.add_argument("results_a")
    cmp_.add_argument("results_b")
    cmp_.add_argument("--mode-a")
    cmp_.add_argument("--mode-b")
    cmp_.set_defaults(func=_cmd_compare)

    ana = sub.add_parser("analyze", help="analyze a time-tag file")
    ana.add_argument("timetag_file")
    ana.add_argument("--drive-frequency", type=float)
    ana.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH * 1e6, help="microseconds")
    ana.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (WVAError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
