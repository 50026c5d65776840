"""Per-snapshot analysis, trajectory files and figure recipes.

The CLI and the acceptance suite share this module: a run is a stream of
snapshots, each reduced on the fly to a handful of optimizer results and
narrow-band extrema, so the full cumulant history never has to be kept.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import GaussianFieldState, SimulationConfig, SpectralWindow, min_relative_eigenvalue, total_photon_number
from .spectral import (
    SpectralMoments,
    _fmt,
    narrow_pair_maps,
    omega0_crossing,
    squeezing_db,
    to_spectral,
)
from .windows import (
    WindowSearchResult,
    optimize_asymmetric_pair,
    optimize_symmetric_pair,
    optimize_symmetric_single,
)

DEFAULT_GAMMAS = (0.0, 0.005, 0.01, 0.02, 0.03)

# Optimizations run per snapshot: name -> (search kind, objective).
SEARCHES = {
    "symmetric_single": ("symmetric_single", "eta_11"),
    "symmetric_pair_eta_tilde": ("symmetric_pair", "eta_tilde_12"),
    "symmetric_pair_tau_tilde": ("symmetric_pair", "tau_tilde_12"),
    "asymmetric_pair_eta_tilde": ("asymmetric_pair", "eta_tilde_12"),
    "asymmetric_pair_tau_tilde": ("asymmetric_pair", "tau_tilde_12"),
}


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    gammas: tuple = DEFAULT_GAMMAS
    searches: tuple = ()
    surface: bool = False
    map_times: tuple = ()
    narrow: bool = False
    t_final: float = 16.0
    snapshot_interval: float = 0.1

    def base_config(self) -> SimulationConfig:
        return SimulationConfig(t_final=self.t_final, snapshot_interval=self.snapshot_interval)


RECIPES = {
    r.name: r
    for r in [
        Recipe("fig2", "narrow mid-bin eta_11 versus t for the default damping set", narrow=True),
        Recipe("fig3", "eta_11(omega, t) surfaces and Omega0", gammas=(0.0, 0.03), surface=True),
        Recipe("fig4", "narrow-bin eta_12 maps at t = 5 and 10", gammas=(0.0, 0.03), map_times=(5.0, 10.0)),
        Recipe("fig5", "narrow-bin eta_tilde_12 maps at t = 5 and 10", gammas=(0.0, 0.03), map_times=(5.0, 10.0)),
        Recipe("fig6", "narrow-bin tau_tilde_12 maps at t = 5 and 10", gammas=(0.0, 0.03), map_times=(5.0, 10.0)),
        Recipe("fig7", "optimal symmetric single window (eta_11)", searches=("symmetric_single",)),
        Recipe("fig8", "optimal symmetric window pair (eta_tilde_12)", searches=("symmetric_pair_eta_tilde",)),
        Recipe("fig9", "optimal symmetric window pair (tau_tilde_12)", searches=("symmetric_pair_tau_tilde",)),
        Recipe("fig10", "optimal asymmetric window pair (eta_tilde_12)", searches=("asymmetric_pair_eta_tilde",)),
        Recipe(
            "fig11",
            "symmetric versus asymmetric pairs, undamped fiber",
            gammas=(0.0,),
            searches=("symmetric_pair_eta_tilde", "asymmetric_pair_eta_tilde",
                      "symmetric_pair_tau_tilde", "asymmetric_pair_tau_tilde"),
        ),
    ]
}

MAP_FILES = {"fig4": ("eta_12",), "fig5": ("eta_tilde_12",), "fig6": ("tau_tilde_12",)}


def run_search(name: str, spec: SpectralMoments, reference_total: float, coarsening: int = 2) -> WindowSearchResult:
    kind, objective = SEARCHES[name]
    if kind == "symmetric_single":
        return optimize_symmetric_single(spec, reference_total)
    if kind == "symmetric_pair":
        return optimize_symmetric_pair(spec, objective, reference_total)
    return optimize_asymmetric_pair(spec, objective, coarsening, reference_total=reference_total)


@dataclass
class SnapshotSummary:
    """Everything the acceptance checks and trajectory files need from one snapshot."""

    time: float
    total_photons: float
    min_rel_eigenvalue: float
    narrow_mid_eta11: float
    omega0: float
    narrow_extrema: dict
    bound_violations: dict
    searches: dict = field(default_factory=dict)


def _bound_violations(spec: SpectralMoments, maps: dict) -> dict:
    """Largest excursion beyond each coefficient bound over all narrow-bin pairs (0 if none)."""
    eta11 = spec.narrow_eta11()
    tiny = 1e-12
    out = {
        "eta_ii<=1": max(0.0, float(np.nanmax(eta11)) - 1.0),
        "|eta_12|<=1": max(0.0, float(np.nanmax(np.abs(maps["eta_12"]))) - 1.0),
        "eta_tilde_12>=-1": max(0.0, -1.0 - float(np.nanmin(maps["eta_tilde_12"]))),
        "tau_tilde_12>=-1": max(0.0, -1.0 - float(np.nanmin(maps["tau_tilde_12"]))),
    }
    return {k: (v if v > tiny else 0.0) for k, v in out.items()}


def summarize(state: GaussianFieldState, reference_total: float, searches=tuple(SEARCHES), coarsening: int = 2,
              spec: SpectralMoments | None = None) -> SnapshotSummary:
    spec = to_spectral(state) if spec is None else spec
    maps = narrow_pair_maps(spec)
    c = spec.grid.center_bin
    extrema = {f"min_{k}": float(np.nanmin(v)) for k, v in maps.items()}
    extrema["max_eta_12"] = float(np.nanmax(maps["eta_12"]))
    s = SnapshotSummary(
        time=state.time,
        total_photons=total_photon_number(state),
        min_rel_eigenvalue=min_relative_eigenvalue(state.c_norm),
        narrow_mid_eta11=float(spec.narrow_eta11()[c]),
        omega0=omega0_crossing(spec),
        narrow_extrema=extrema,
        bound_violations=_bound_violations(spec, maps),
    )
    for name in searches:
        s.searches[name] = run_search(name, spec, reference_total, coarsening)
    return s


# ---------------------------------------------------------------------------
# Trajectory files


def _search_header(name: str) -> list[str]:
    if name == "symmetric_single":
        return ["t/t_d", "Omega/omega0", "N1/N", "eta_11", "squeezing_dB", "Omega0/omega0"]
    obj = SEARCHES[name][1]
    return ["t/t_d", "Omega1/omega0", "Omega1'/omega0", "Omega2/omega0", "Omega2'/omega0", "N1/N", "N2/N", obj]


def _search_row(name: str, s: SnapshotSummary) -> list[str]:
    r = s.searches[name]
    if name == "symmetric_single":
        fano = 1.0 / (1.0 - r.value)
        return [_fmt(s.time), _fmt(r.windows[0].hi), _fmt(r.photon_fractions[0]), _fmt(r.value),
                _fmt(squeezing_db(fano)), _fmt(s.omega0)]
    w1, w2 = r.windows
    return [_fmt(s.time), _fmt(w1.lo), _fmt(w1.hi), _fmt(w2.lo), _fmt(w2.hi),
            _fmt(r.photon_fractions[0]), _fmt(r.photon_fractions[1]), _fmt(r.value)]


NARROW_HEADER = ["t/t_d", "eta_11(omega=0)", "Omega0/omega0", "min_eta_12", "max_eta_12",
                 "min_eta_tilde_12", "min_tau_tilde_12", "N/N_initial", "min_rel_eigenvalue"]


def _narrow_row(s: SnapshotSummary, reference_total: float) -> list[str]:
    e = s.narrow_extrema
    return [_fmt(s.time), _fmt(s.narrow_mid_eta11), _fmt(s.omega0), _fmt(e["min_eta_12"]), _fmt(e["max_eta_12"]),
            _fmt(e["min_eta_tilde_12"]), _fmt(e["min_tau_tilde_12"]), _fmt(s.total_photons / reference_total),
            _fmt(s.min_rel_eigenvalue)]


class TrajectoryWriter:
    """Streams one CSV per search plus ``narrow.csv`` into a directory."""

    def __init__(self, out_dir, searches, reference_total: float):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.reference_total = reference_total
        self.paths = {"narrow": self.out_dir / "narrow.csv"}
        self.paths.update({n: self.out_dir / f"{n}.csv" for n in searches})
        self._fh = {k: open(p, "w", newline="") for k, p in self.paths.items()}
        self._wr = {k: csv.writer(fh, lineterminator="\n") for k, fh in self._fh.items()}
        self._wr["narrow"].writerow(NARROW_HEADER)
        for n in searches:
            self._wr[n].writerow(_search_header(n))

    def add(self, s: SnapshotSummary) -> None:
        self._wr["narrow"].writerow(_narrow_row(s, self.reference_total))
        for n in self.paths:
            if n != "narrow":
                self._wr[n].writerow(_search_row(n, s))
        for fh in self._fh.values():
            fh.flush()

    def close(self) -> None:
        for fh in self._fh.values():
            fh.close()


SUMMARY_HEADER = ["gamma_td", "quantity", "extremum", "t/t_d", "N1/N", "N2/N"]


def extremal_rows(gamma: float, summaries: list[SnapshotSummary]) -> list[list[str]]:
    """Minimum over t of every tracked quantity, reported with its time and photon fractions."""
    rows = []
    if not summaries:
        return rows
    i = min(range(len(summaries)), key=lambda k: summaries[k].narrow_mid_eta11)
    rows.append([_fmt(gamma), "narrow_mid_eta_11", _fmt(summaries[i].narrow_mid_eta11), _fmt(summaries[i].time), "", ""])
    for key in ("min_eta_tilde_12", "min_tau_tilde_12"):
        i = min(range(len(summaries)), key=lambda k: summaries[k].narrow_extrema[key])
        rows.append([_fmt(gamma), f"narrow_{key}", _fmt(summaries[i].narrow_extrema[key]), _fmt(summaries[i].time), "", ""])
    for name in summaries[0].searches:
        i = min(range(len(summaries)), key=lambda k: summaries[k].searches[name].value)
        r = summaries[i].searches[name]
        f2 = r.photon_fractions[1] if len(r.photon_fractions) > 1 else None
        rows.append([_fmt(gamma), name, _fmt(r.value), _fmt(r.time), _fmt(r.photon_fractions[0]), _fmt(f2)])
    return rows


def write_summary(path, rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SUMMARY_HEADER)
        wr.writerows(rows)


def nearest_snapshot_times(times, wanted, tol: float = 1e-9) -> list[float]:
    """Times in ``times`` matching each requested time (requested times absent from the run are dropped)."""
    out = []
    for w in wanted:
        hit = [t for t in times if abs(t - w) <= tol * max(1.0, abs(w))]
        if hit:
            out.append(hit[0])
    return out


def parse_windows(text: str) -> list[tuple]:
    """``lo:hi`` for a single window, ``lo:hi,lo2:hi2`` for a pair; entries separated by ``;``."""
    out = []
    for entry in (e.strip() for e in text.split(";")):
        if not entry:
            continue
        wins = []
        for part in entry.split(","):
            lo, sep, hi = part.partition(":")
            if not sep:
                raise ValueError(f"malformed window {part!r}; expected lo:hi")
            try:
                lo_f, hi_f = float(lo), float(hi)
            except ValueError:
                raise ValueError(f"malformed window {part!r}; endpoints must be numbers") from None
            if not (math.isfinite(lo_f) and math.isfinite(hi_f)):
                raise ValueError(f"malformed window {part!r}; endpoints must be finite")
            wins.append(SpectralWindow(lo_f, hi_f))
        if len(wins) > 2:
            raise ValueError(f"malformed window entry {entry!r}; at most two windows")
        out.append(tuple(wins))
    return out
