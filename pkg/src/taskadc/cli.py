"""Batch experiment driver: design, sweep, and rate-search subcommands.

Every run writes a manifest (config hash, seed, grid density, version) next
to its outputs; CSV numbers are emitted with repr so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .design import AdcConfig, DesignError, design_filters
from .scenarios import ScenarioSpec, build_scenario
from .search import (
    ARCHITECTURES,
    SearchSpec,
    baseline_design,
    rate_search,
    shifted_task_design,
)
from .simulate import SimulationRun, estimate_mse

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_ARCH_ALIASES = {
    "task": "task_based",
    "analog": "analog_recovery",
    "digital": "digital_recovery",
}


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, data) -> None:
    _atomic_write(path, json.dumps(data, indent=2) + "\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    _atomic_write(path, buf.getvalue())


def _write_manifest(out_dir: str, command: str, config: dict, outputs: list[str]) -> None:
    canon = json.dumps(config, sort_keys=True)
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": config.get("seed"),
        "grid_points": config.get("grid_points"),
        "version": __version__,
        "outputs": outputs,
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _load_scenario(path: str, n_points: int | None):
    spec = ScenarioSpec.from_file(path)
    kwargs = {} if n_points is None else {"n_points": n_points}
    return spec, build_scenario(spec, **kwargs)


def _cfg_from_args(args) -> AdcConfig:
    if args.k is None or args.bits is None or args.fs is None:
        raise ValueError("design needs --k, --bits, and --fs")
    return AdcConfig(k_adcs=args.k, fs=args.fs, bits=args.bits, eta=args.eta)


def cmd_design(args) -> int:
    _, model = _load_scenario(args.scenario, args.grid_points)
    cfg = _cfg_from_args(args)
    design = design_filters(model, cfg, args.grid_points)
    os.makedirs(args.out, exist_ok=True)
    design_path = os.path.join(args.out, "design.json")
    _write_json(design_path, design.to_dict())

    active = (design.sigma_h > 0).sum(axis=1)
    deciles = [
        int(round(float(np.mean(part)))) for part in np.array_split(active, 10)
    ]
    summary = [
        f"k_adcs: {cfg.k_adcs}",
        f"fs_hz: {cfg.fs!r}",
        f"bits: {cfg.bits}",
        f"eta: {cfg.eta!r}",
        f"water_level: {design.water_level!r}",
        f"mse: {design.mse_theory!r}",
        f"nmse: {design.nmse!r}",
        f"active modes per frequency decile: {deciles}",
    ]
    summary_path = os.path.join(args.out, "summary.txt")
    _atomic_write(summary_path, "\n".join(summary) + "\n")
    _write_manifest(args.out, "design", _config_dict(args), ["design.json", "summary.txt"])
    print("\n".join(summary))
    return 0


def _sweep_value_configs(args, model):
    """(value, AdcConfig) pairs for the sweep variable."""
    if args.var in ("b", "K"):
        values = [int(v) for v in np.linspace(args.start, args.stop, args.steps)]
        values = sorted(dict.fromkeys(values))
    else:
        values = [float(v) for v in np.linspace(args.start, args.stop, args.steps)]
    if not values:
        raise ValueError("empty sweep range")
    base = {
        "k_adcs": args.k,
        "fs": args.fs if args.fs is not None else model.f_nyq,
        "bits": args.bits,
        "eta": args.eta,
    }
    pairs = []
    for v in values:
        params = dict(base)
        if args.var == "eta":
            params["eta"] = v
        elif args.var == "b":
            params["bits"] = v
        elif args.var == "K":
            params["k_adcs"] = v
        elif args.var == "fs":
            params["fs"] = v
        if params["k_adcs"] is None or params["bits"] is None:
            raise ValueError("sweep needs --k and --bits for the fixed parameters")
        pairs.append((v, AdcConfig(**params)))
    return pairs


def _snap_to_divisor(fs: float, f_nyq: float, oversample: int = 4) -> float:
    """Nearest rate that divides the simulation grid rate (integer decimation)."""
    sim_rate = oversample * f_nyq
    return sim_rate / max(1, round(sim_rate / fs))


def cmd_sweep(args) -> int:
    _, model = _load_scenario(args.scenario, args.grid_points)
    archs = [_ARCH_ALIASES.get(a, a) for a in args.arch.split(",")]
    for arch in archs:
        if arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch}")
    if args.var == "K" and set(archs) != {"task_based"}:
        raise ValueError("a K sweep is only supported for the task-based architecture")
    header = ["value", "arch", "theory_nmse"]
    if args.simulate:
        header += ["empirical_nmse", "std_error"]
    rows = []
    if args.var == "t0":
        if args.k is None or args.bits is None:
            raise ValueError("t0 sweep needs --k and --bits")
        cfg = AdcConfig(
            k_adcs=args.k,
            fs=args.fs if args.fs is not None else model.f_nyq,
            bits=args.bits,
            eta=args.eta,
        )
        base = design_filters(model, cfg, args.grid_points)
        for t0 in np.linspace(args.start, args.stop, args.steps):
            shifted = shifted_task_design(model, float(t0), cfg, base=base)
            rows.append([float(t0), "task_based", shifted.nmse])
    else:
        for value, cfg in _sweep_value_configs(args, model):
            if args.simulate:
                snapped = _snap_to_divisor(cfg.fs, model.f_nyq)
                if snapped != cfg.fs:
                    # Monte-Carlo runs need integer decimation; report the snap
                    print(f"fs {cfg.fs!r} snapped to {snapped!r} for simulation")
                    cfg = AdcConfig(cfg.k_adcs, snapped, cfg.bits, cfg.eta)
                    if args.var == "fs":
                        value = snapped
            for arch in archs:
                if arch == "analog_recovery" and cfg.k_adcs != model.n_task:
                    cfg_arch = AdcConfig(model.n_task, cfg.fs, cfg.bits, cfg.eta)
                elif arch == "digital_recovery" and cfg.k_adcs != model.m_inputs:
                    cfg_arch = AdcConfig(model.m_inputs, cfg.fs, cfg.bits, cfg.eta)
                else:
                    cfg_arch = cfg
                design = baseline_design(model, cfg_arch, arch, args.grid_points)
                row = [value, arch, design.nmse]
                if args.simulate:
                    run = SimulationRun(
                        scenario_id=os.path.basename(args.scenario),
                        model=model,
                        design=design,
                        n_trials=args.trials,
                        seed=args.seed,
                        dithered=args.dither,
                    )
                    report = estimate_mse(run)
                    row += [report.empirical_nmse, report.std_error]
                rows.append(row)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"sweep_{args.var}.csv")
    _write_csv(csv_path, header, rows)
    _write_manifest(args.out, "sweep", _config_dict(args), [os.path.basename(csv_path)])
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return 0


def cmd_rate_search(args) -> int:
    _, model = _load_scenario(args.scenario, args.grid_points)
    budgets = [float(b) for b in args.budgets.split(",") if b.strip()]
    if not budgets:
        raise ValueError("empty budgets list")
    archs = [_ARCH_ALIASES.get(a, a) for a in args.arch.split(",")]
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    best_rows = []
    for arch in archs:
        table_rows = []
        for budget in budgets:
            spec = SearchSpec(
                rate_budget=budget,
                architecture=arch,
                eta=args.eta,
                n_t0=args.n_t0,
                n_points=args.grid_points,
            )
            result = rate_search(model, spec)
            best_rows.append(
                [budget, arch, result.best_k, result.best_bits, result.best_fs, result.best_nmse]
            )
            for row in result.table:
                table_rows.append(
                    [
                        budget,
                        row["k_adcs"],
                        row["bits"],
                        row["fs_hz"],
                        row["nmse"],
                        row["nmse_t0_0"],
                    ]
                )
        path = os.path.join(args.out, f"rate_search_{arch}.csv")
        _write_csv(path, ["budget", "k_adcs", "bits", "fs_hz", "nmse", "nmse_t0_0"], table_rows)
        outputs.append(os.path.basename(path))
    best_path = os.path.join(args.out, "rate_search_best.csv")
    _write_csv(
        best_path, ["budget", "arch", "k_adcs", "bits", "fs_hz", "nmse"], best_rows
    )
    outputs.append(os.path.basename(best_path))
    _write_manifest(args.out, "rate-search", _config_dict(args), outputs)
    print(f"wrote {len(outputs)} files to {args.out}")
    return 0


def _config_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskadc",
        description="Design and verify task-based analog-to-digital acquisition chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--grid-points", type=int, default=None, dest="grid_points")
        p.add_argument("--k", type=int, default=None, help="number of converters")
        p.add_argument("--bits", type=int, default=None, help="bits per sample")
        p.add_argument("--fs", type=float, default=None, help="sampling rate in Hz")
        p.add_argument("--eta", type=float, default=None, help="loading factor")

    p_design = sub.add_parser("design", help="closed-form filter design")
    common(p_design)
    p_design.set_defaults(func=cmd_design)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter, emit nmse CSV")
    common(p_sweep)
    p_sweep.add_argument("--var", required=True, choices=["eta", "b", "K", "fs", "t0"])
    p_sweep.add_argument("--from", type=float, required=True, dest="start")
    p_sweep.add_argument("--to", type=float, required=True, dest="stop")
    p_sweep.add_argument("--steps", type=int, required=True)
    p_sweep.add_argument("--arch", default="task", help="comma list: task,analog,digital")
    p_sweep.add_argument("--simulate", action="store_true")
    p_sweep.add_argument("--trials", type=int, default=10_000)
    p_sweep.add_argument(
        "--dither", default=True, type=lambda s: s.lower() not in ("0", "false", "no")
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_rate = sub.add_parser("rate-search", help="grid search under bit-rate budgets")
    common(p_rate)
    p_rate.add_argument("--budgets", required=True, help="comma list of bits/s budgets")
    p_rate.add_argument("--arch", default="task,analog,digital")
    p_rate.add_argument("--n-t0", type=int, default=16, dest="n_t0")
    p_rate.set_defaults(func=cmd_rate_search)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DesignError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
