"""Command line interface.

Subcommands: ``run <file>``, ``fig2``, ``fig3``, ``fig4``, ``calibrate``,
``dump-profile``; common flags ``--seed``, ``--out``, ``--override k=v``.
Exit code 0 on success, nonzero with field-level diagnostics on config
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import counting, holeburning as hb, propagation as prop
from .scenarios import (
    Calibration,
    CalibrationError,
    ConfigError,
    MemoryPipeline,
    Scenario,
    apply_overrides,
    calibrate,
    load_scenario,
    preset_path,
    run_cases,
    run_fig2,
    run_fig4,
    scenario_from_dict,
    scenario_hash,
    write_case_table,
    write_fig2_table,
    write_fig4_table,
)

log = logging.getLogger("afcsim")


def _load(args, preset: str | None = None) -> Scenario:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    if preset is not None:
        source = preset_path(preset)
        data = tomllib.loads(source.read_text())
    elif args.scenario is not None:
        with open(args.scenario, "rb") as fh:
            data = tomllib.load(fh)
    else:
        data = {}
    if args.override:
        data = apply_overrides(data, args.override)
    if args.seed is not None:
        data.setdefault("run", {})["seed"] = args.seed
    return scenario_from_dict(data)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_inset(scn: Scenario, results, out: Path) -> None:
    """Histogram dumps for the input-versus-echo trace comparison."""
    for res in results:
        for (case, tau, mu), hist in res.histograms.items():
            if case in ("fc_only", "echo") and abs(mu - 0.1) < 1e-12:
                counting.write_histogram(hist, out / f"inset_{case}_tau{tau:g}us.txt")


def cmd_run(args, preset=None) -> int:
    scn = _load(args, preset)
    out = _outdir(args)
    calib = calibrate(scn)
    results = run_cases(scn, calib)
    name = preset or "run"
    write_case_table(results, scn, out / f"{name}_results.csv")
    _write_inset(scn, results, out)
    for res in results:
        if res.fit:
            print(
                f"{res.case:8s} tau={res.tau_us:g}us  mu1 = {res.fit.mu1:.4g} "
                f"+- {res.fit.mu1_sigma:.2g}"
            )
        if res.eta_tot_measured:
            v, s = res.eta_tot_measured
            print(f"{res.case:8s} measured total efficiency = {v:.4g} +- {s:.2g}")
    print(f"wrote {out / (name + '_results.csv')}")
    return 0


def cmd_fig2(args) -> int:
    scn = _load(args, "fig2")
    out = _outdir(args)
    rows = run_fig2(scn)
    write_fig2_table(rows, scn, out / "fig2_results.csv")
    for r in rows:
        print(
            f"P = {r['pump_power_w']:.3f} W  eta_dev = {r['eta_dev']:.4f}  "
            f"noise/pulse = {r['noise_per_pulse']:.3e}  snr = {r['snr']:.3f}"
        )
    print(f"wrote {out / 'fig2_results.csv'}")
    return 0


def cmd_fig4(args) -> int:
    scn = _load(args, "fig4")
    out = _outdir(args)
    rows = run_fig4(scn)
    write_fig4_table(rows, scn, out / "fig4_results.csv")
    for r in rows:
        print(
            f"tau = {r['storage_time_us']:5.2f} us  eta_afc = {r['eta_afc']:.4f}  "
            f"eta_tot = {r['eta_tot']:.4f}  snr = {r['snr']:.1f}"
        )
    print(f"wrote {out / 'fig4_results.csv'}")
    return 0


def cmd_calibrate(args) -> int:
    scn = _load(args)
    calib = calibrate(scn)
    print(f"alpha = {calib.alpha:.6g} counts/pulse/W^2 (reference window)")
    print(f"depth_scale = {calib.depth_scale:.6g}")
    out = _outdir(args)
    path = out / "calibration.toml"
    with open(path, "w") as fh:
        fh.write("# fitted scalars; paste into [noise]/[comb] to pin them\n")
        fh.write(f"alpha = {calib.alpha!r}\n")
        fh.write(f"depth_scale = {calib.depth_scale!r}\n")
        fh.write(f"# scenario={scenario_hash(scn)} seed={scn.run.seed}\n")
    print(f"wrote {path}")
    return 0


def cmd_dump_profile(args) -> int:
    scn = _load(args)
    out = _outdir(args)
    pipeline = MemoryPipeline(scn)
    if scn.memory.pit_only:
        profile = pipeline.pit_profile()
        name = "profile_pit.txt"
    else:
        depth = scn.comb.depth_scale
        if depth is None:
            depth = calibrate(scn, pipeline).depth_scale
        tau = scn.run.storage_times_us[0]
        profile, _ = pipeline.tailored_profile(tau, depth)
        name = f"profile_comb_tau{tau:g}us.txt"
    path = out / name
    hb.dump_profile(profile, path)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afcsim",
        description="Telecom up-conversion + comb-storage pipeline simulator",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log applied defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_file=False):
        if needs_file:
            p.add_argument("scenario", help="scenario TOML file")
        else:
            p.add_argument("--scenario", default=None, help=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted config override, e.g. run.pump_power_w=0.2",
        )

    p = sub.add_parser("run", help="run a scenario file")
    common(p, needs_file=True)
    for name in ("fig2", "fig3", "fig4"):
        p = sub.add_parser(name, help=f"run the {name} preset")
        common(p)
    p = sub.add_parser("calibrate", help="run the two calibration routines")
    common(p)
    p = sub.add_parser("dump-profile", help="dump the prepared absorption profile")
    common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "fig2":
            return cmd_fig2(args)
        if args.command == "fig3":
            return cmd_run(args, preset="fig3")
        if args.command == "fig4":
            return cmd_fig4(args)
        if args.command == "calibrate":
            return cmd_calibrate(args)
        if args.command == "dump-profile":
            return cmd_dump_profile(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CalibrationError, prop.EchoAmbiguityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
