"""qsoliton command-line interface.

Exit codes: 0 success, 1 configuration or input error, 2 numerical abort,
3 partial sweep failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import sys
import time
from pathlib import Path

from . import __version__
from .dynamics import NumericalError, iter_evolve, set_fft_workers
from .fock import VALIDATION_CASES, compare_with_gaussian, oracle_comparison
from .io import (
    ConfigError,
    SnapshotFormatError,
    SnapshotReader,
    SnapshotWriter,
    config_sha256,
    format_config,
    load_config,
    write_manifest,
)
from .lattice import EmptyWindowError, SimulationConfig, make_fundamental_soliton, total_photon_number
from .pipeline import (
    DEFAULT_GAMMAS,
    MAP_FILES,
    RECIPES,
    SEARCHES,
    TrajectoryWriter,
    extremal_rows,
    nearest_snapshot_times,
    parse_windows,
    summarize,
    write_summary,
)
from .spectral import (
    UndefinedStatisticError,
    correlation_report,
    to_spectral,
    write_eta11_surface,
    write_pair_map,
    write_window_reports,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _progress(state) -> None:
    _log(f"t/t_d={state.time:.4f}")


def _parse_gammas(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse gamma list {text!r}", "gamma_td") from None
    if not vals:
        raise ConfigError("empty gamma list", "gamma_td")
    if any(not v >= 0 for v in vals):
        raise ConfigError("gamma values must be >= 0", "gamma_td")
    return vals


def _resolve(args) -> tuple[SimulationConfig, object]:
    """Base config and recipe from --config / --recipe."""
    recipe = None
    if args.recipe is not None:
        if args.recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {args.recipe!r}; choose from {', '.join(RECIPES)}")
        recipe = RECIPES[args.recipe]
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    elif recipe is not None:
        cfg = recipe.base_config()
    else:
        raise ConfigError("one of --config or --recipe is required")
    return cfg, recipe


def _manifest(out: Path, cfg: SimulationConfig, snapshots, outputs, wall: float, extra=None) -> Path:
    entries = {"engine_version": f"qsoliton {__version__}", "config_sha256": config_sha256(cfg)}
    for line in format_config(cfg).splitlines():
        k, _, v = line.partition(" = ")
        entries[f"config.{k}"] = v
    entries["snapshot_count"] = len(snapshots)
    entries["snapshot_times"] = ",".join(f"{t:.6f}" for t in snapshots)
    for i, p in enumerate(outputs):
        entries[f"output.{i}"] = Path(p).name
    entries.update(extra or {})
    entries["wall_clock_s"] = f"{wall:.3f}"
    path = out / "manifest.txt"
    write_manifest(path, entries)
    return path


# ---------------------------------------------------------------------------


def cmd_evolve(args) -> int:
    cfg, _ = _resolve(args)
    gammas = _parse_gammas(args.gamma)
    if gammas:
        if len(gammas) != 1:
            raise ConfigError("evolve takes a single --gamma value; use sweep for lists", "gamma_td")
        cfg = cfg.replace(gamma_td=gammas[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    set_fft_workers(args.threads)
    t0 = time.perf_counter()
    path = out / "snapshots.gfs"
    state = make_fundamental_soliton(cfg.grid, cfg)
    with SnapshotWriter(path, cfg) as w:
        for s in iter_evolve(state, cfg, progress=_progress):
            w.write(s)
    _manifest(out, cfg, w.times, [path], time.perf_counter() - t0)
    return EXIT_OK


def cmd_analyze(args) -> int:
    reader = SnapshotReader(args.snapshots)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    recipe = RECIPES.get(args.recipe) if args.recipe else None
    if args.recipe and recipe is None:
        raise ConfigError(f"unknown recipe {args.recipe!r}")
    try:
        window_sets = parse_windows(args.windows or "")
    except ValueError as exc:
        raise ConfigError(str(exc), "windows") from None
    times = [float(t) for t in args.times.split(",")] if args.times else list(recipe.map_times if recipe else ())
    map_names = MAP_FILES.get(args.recipe, ("eta_12", "eta_tilde_12", "tau_tilde_12"))
    spectra, reports, outputs = [], [], []
    all_times = []
    for state in reader:
        sp = to_spectral(state)
        spectra.append(sp)
        all_times.append(state.time)
        for ws in window_sets:
            try:
                reports.append(correlation_report(sp, *ws))
            except (EmptyWindowError, UndefinedStatisticError) as exc:
                raise ConfigError(f"window {ws}: {exc}", "windows") from None
        _progress(state)
    surface = out / "eta11_surface.csv"
    write_eta11_surface(surface, spectra)
    outputs.append(surface)
    for t in nearest_snapshot_times(all_times, times):
        sp = spectra[all_times.index(t)]
        for name in map_names:
            p = out / f"map_{name}_t{t:.2f}.csv"
            write_pair_map(p, sp, name)
            outputs.append(p)
    rep = out / "window_report.csv"
    write_window_reports(rep, reports)
    outputs.append(rep)
    _manifest(out, reader.config, all_times, outputs, time.perf_counter() - t0)
    return EXIT_OK


def _searches_for(recipe, default=tuple(SEARCHES)):
    if recipe is None or not recipe.searches:
        return default
    return recipe.searches


def cmd_optimize(args) -> int:
    reader = SnapshotReader(args.snapshots)
    out = Path(args.out)
    recipe = RECIPES.get(args.recipe) if args.recipe else None
    if args.recipe and recipe is None:
        raise ConfigError(f"unknown recipe {args.recipe!r}")
    t0 = time.perf_counter()
    searches = _searches_for(recipe)
    ref = None
    summaries = []
    writer = None
    for state in reader:
        if ref is None:
            ref = total_photon_number(make_fundamental_soliton(reader.grid, reader.config, strict=False))
            writer = TrajectoryWriter(out, searches, ref)
        s = summarize(state, ref, searches, args.coarsening)
        writer.add(s)
        summaries.append(s)
        _progress(state)
    if writer is None:
        raise ConfigError("snapshot container is empty")
    writer.close()
    summary = out / "summary.csv"
    write_summary(summary, extremal_rows(reader.config.gamma_td, summaries))
    _manifest(out, reader.config, [s.time for s in summaries], list(writer.paths.values()) + [summary],
              time.perf_counter() - t0, {"coarsening": args.coarsening})
    return EXIT_OK


def _gamma_tag(g: float) -> str:
    return f"gamma_{g:.4f}"


def _sweep_one(cfg: SimulationConfig, recipe_name: str | None, out: Path, coarsening: int, keep: bool):
    """One damping value: evolve and reduce snapshots on the fly.  Returns (gamma, summary rows)."""
    recipe = RECIPES.get(recipe_name) if recipe_name else None
    searches = _searches_for(recipe)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    state = make_fundamental_soliton(cfg.grid, cfg)
    ref = total_photon_number(state)
    writer = TrajectoryWriter(out, searches, ref)
    snap_writer = SnapshotWriter(out / "snapshots.gfs", cfg) if keep else None
    want_surface = recipe is None or recipe.surface
    map_times = recipe.map_times if recipe else (5.0, 10.0)
    map_names = MAP_FILES.get(recipe_name, ("eta_12", "eta_tilde_12", "tau_tilde_12"))
    spectra_for_surface, summaries, outputs = [], [], []
    try:
        for s in iter_evolve(state, cfg, progress=lambda st: _log(f"gamma_td={cfg.gamma_td:g} t/t_d={st.time:.4f}")):
            sp = to_spectral(s)
            summ = summarize(s, ref, searches, coarsening, spec=sp)
            writer.add(summ)
            summaries.append(summ)
            if snap_writer:
                snap_writer.write(s)
            if want_surface:
                spectra_for_surface.append(_SurfaceRow(sp))
            for t in nearest_snapshot_times([s.time], map_times):
                for name in map_names:
                    p = out / f"map_{name}_t{t:.2f}.csv"
                    write_pair_map(p, sp, name)
                    outputs.append(p)
    finally:
        writer.close()
        if snap_writer:
            snap_writer.close()
    outputs.extend(writer.paths.values())
    if want_surface:
        p = out / "eta11_surface.csv"
        write_eta11_surface(p, spectra_for_surface)
        outputs.append(p)
    if snap_writer:
        outputs.append(out / "snapshots.gfs")
    rows = extremal_rows(cfg.gamma_td, summaries)
    p = out / "summary.csv"
    write_summary(p, rows)
    outputs.append(p)
    _manifest(out, cfg, [s.time for s in summaries], outputs, time.perf_counter() - t0, {"coarsening": coarsening})
    return cfg.gamma_td, rows


class _SurfaceRow:
    """Keeps only what the eta_11 surface needs from a spectral snapshot."""

    def __init__(self, sp):
        self.grid = sp.grid
        self.time = sp.time
        self._eta = sp.narrow_eta11()

    def narrow_eta11(self):
        return self._eta


def cmd_sweep(args) -> int:
    cfg, recipe = _resolve(args)
    gammas = _parse_gammas(args.gamma) or list(recipe.gammas if recipe else DEFAULT_GAMMAS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    jobs = [(cfg.replace(gamma_td=g), args.recipe, out / _gamma_tag(g), args.coarsening, args.keep_snapshots)
            for g in gammas]
    results, failures = {}, []
    if args.threads > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.threads) as pool:
            futs = {pool.submit(_sweep_one, *job): job[0].gamma_td for job in jobs}
            for fut in concurrent.futures.as_completed(futs):
                g = futs[fut]
                try:
                    results[g] = fut.result()[1]
                except (NumericalError, ValueError) as exc:
                    failures.append((g, exc))
    else:
        for job in jobs:
            g = job[0].gamma_td
            try:
                results[g] = _sweep_one(*job)[1]
            except (NumericalError, ValueError) as exc:
                failures.append((g, exc))
    for g, exc in failures:
        _log(f"gamma_td={g:g} failed: {exc}")
    rows = [row for g in gammas if g in results for row in results[g]]
    summary = out / "summary.csv"
    write_summary(summary, rows)
    extra = {f"failed.{i}": f"{g!r}: {exc}".replace("\n", " ") for i, (g, exc) in enumerate(sorted(failures, key=lambda x: x[0]))}
    extra["gammas"] = ",".join(repr(g) for g in gammas)
    _manifest(out, cfg, [], [summary] + [out / _gamma_tag(g) for g in gammas if g in results],
              time.perf_counter() - t0, extra)
    if failures:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_oracle_validate(args) -> int:
    """Deviation table of the Gaussian engine against the truncated-Fock oracle."""
    lines = ["regime                      n_modes  g       horizon  max_rel_deviation"]
    ok = True
    for name, fc, horizon, amp, tol in VALIDATION_CASES:
        dev = compare_with_gaussian(fc, horizon, [amp + 0j] * fc.n_modes)
        ok &= dev < tol
        lines.append(f"{name:<28}{fc.n_modes:<9}{fc.g:<8g}{horizon:<9g}{dev:.3e}  (gate {tol:g})")
    if args.verbose:
        _, fc, horizon, amp, _ = VALIDATION_CASES[2]
        cmp = oracle_comparison(fc, horizon, [amp + 0j], report_every=100)
        lines.append("")
        lines.append(cmp.table())
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK if ok else EXIT_NUMERICAL


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1); argparse's default 2 means a numerical abort here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsoliton", description="Gaussian-cumulant simulator of damped Kerr solitons")
    p.add_argument("--version", action="version", version=f"qsoliton {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="key=value configuration file")
            sp.add_argument("--recipe", help=f"figure recipe ({', '.join(RECIPES)})")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker count (FFT workers or parallel sweep jobs)")

    e = sub.add_parser("evolve", help="propagate the soliton and write a snapshot container")
    common(e)
    e.add_argument("--gamma", help="damping gamma*t_d (overrides the config)")
    e.set_defaults(func=cmd_evolve)

    a = sub.add_parser("analyze", help="eta_11 surface, pair maps and window reports from snapshots")
    a.add_argument("snapshots")
    common(a, config=False)
    a.add_argument("--recipe", help="fig3..fig6 select the products")
    a.add_argument("--windows", help="'lo:hi' or 'lo:hi,lo2:hi2' entries separated by ';' (omega0 units)")
    a.add_argument("--times", help="comma-separated snapshot times for pair maps")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("optimize", help="window-optimizer trajectories from snapshots")
    o.add_argument("snapshots")
    common(o, config=False)
    o.add_argument("--recipe", help="fig7..fig11 select the searches")
    o.add_argument("--coarsening", type=int, default=2)
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("sweep", help="independent runs over a list of damping values")
    common(s)
    s.add_argument("--gamma", help="comma-separated gamma*t_d values")
    s.add_argument("--coarsening", type=int, default=2)
    s.add_argument("--keep-snapshots", action="store_true", help="also write each run's snapshot container")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("oracle-validate", help="compare the Gaussian engine with the Fock-space oracle")
    v.add_argument("--out", help="also write the table to this file")
    v.add_argument("--verbose", action="store_true")
    v.set_defaults(func=cmd_oracle_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "coarsening", 1) < 1:
        _log("error: --coarsening must be >= 1")
        return EXIT_CONFIG
    if getattr(args, "threads", 1) < 1:
        _log("error: --threads must be >= 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except (SnapshotFormatError, OSError) as exc:
        _log(f"input error: {exc}")
        return EXIT_CONFIG
    except NumericalError as exc:
        where = f" at t/t_d={exc.time:.4f}" if exc.time is not None else ""
        _log(f"numerical abort{where}: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
