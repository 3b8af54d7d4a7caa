"""Implementations behind the CLI subcommands.

Every command takes a RunConfig and returns data (tables or a
verification report); only ``write_figure`` touches the file system.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic as an
from .config import CERT_G_RATIOS, CERT_OMEGAS, Mode, RunConfig
from .errors import ConfigInvalid, HyperbatError, TruncationInsufficient
from .fock import CERTIFIED_WEIGHT, default_cutoff, finite_width_pulse_run, oracle_trace
from .moments import post_pulse_moments, propagate_moment_vectors
from .output import Table, render
from .params import BatteryParams, PulseKind, Regime, enhancement_factor

FIG2A_OMEGAS = (0.1, 0.5, 1.0, 2.0, 5.0)
FIG2_G_RATIO = 2.0

ORACLE_REL_TOL = 1e-3
MOMENT_REL_TOL = 1e-8
FIRST_MOMENT_TOL = 1e-8
CONSERVATION_TOL = 1e-8

_REGIME_CODE = {Regime.OVERDAMPED: -1, Regime.EXCEPTIONAL_POINT: 0, Regime.UNDERDAMPED: 1}


def time_unit(params: BatteryParams) -> tuple[float, str]:
    """Time unit for grids and output: 1/gamma, or 1/g (then 1/omega_b) without loss."""
    if params.gamma > 0:
        return 1.0 / params.gamma, "1/gamma"
    if params.g > 0:
        return 1.0 / params.g, "1/g"
    return 1.0 / params.omega_b, "1/omega_b"


def _times(config: RunConfig):
    grid = config.resolved_grid
    if grid.start < 0:
        raise ConfigInvalid("time grids must start at t >= 0")
    unit, label = time_unit(config.params)
    scaled = grid.values()
    return scaled, scaled * unit, label


def _normalized(x, scale):
    x = np.asarray(x, dtype=float)
    return np.zeros_like(x) if scale == 0 else x / scale


def _oracle_columns(config: RunConfig, times):
    """Oracle E, ergotropy, D and truncation weight at ``times`` (NaN before a finite pulse ends)."""
    p = config.params
    nan = float("nan")
    rows = {t: (nan, nan, nan, nan) for t in times}
    if config.pulse.kind is PulseKind.FINITE_WIDTH:
        after = [t for t in times if t > config.pulse.duration]
        reports = finite_width_pulse_run(p, config.pulse, times=after, n_max=config.n_max, tol=config.tol)[1:]
    else:
        reports = oracle_trace(p, times, n_max=config.n_max, tol=config.tol)
    for r in reports:
        rows[r.t] = (r.energy.E, r.energy.ergotropy, r.energy.D, r.truncation_weight)
    return [rows[t] for t in times]


def cmd_trace(config: RunConfig) -> Table:
    p = config.params
    scaled, t, unit = _times(config)
    rec = an.ergotropy(p, t)
    scale = p.omega_b * enhancement_factor(p)
    columns = ["t", "E_norm", "ergotropy_norm", "D", "P"]
    units = {"t": unit, "E_norm": "omega_b sinh^2(Omega)", "ergotropy_norm": "omega_b sinh^2(Omega)",
             "D": "1", "P": "1"}
    data = [scaled, _normalized(rec.E, scale), _normalized(rec.ergotropy, scale), rec.D, rec.P]
    if config.oracle:
        oc = np.array(_oracle_columns(config, list(t)), dtype=float).reshape(len(t), 4)
        columns += ["oracle_E_norm", "oracle_ergotropy_norm", "oracle_D", "oracle_truncation_weight"]
        units.update({"oracle_E_norm": units["E_norm"], "oracle_ergotropy_norm": units["E_norm"],
                      "oracle_D": "1", "oracle_truncation_weight": "1"})
        data += [_normalized(oc[:, 0], scale), _normalized(oc[:, 1], scale), oc[:, 2], oc[:, 3]]
    rows = [list(map(float, r)) for r in zip(*data)]
    return Table("trace", columns, units, rows, meta={"regime": an.classify_regime(p).regime.value})


def _coupling_points(config: RunConfig):
    p = config.params
    if p.gamma <= 0:
        raise ConfigInvalid("coupling sweeps are in units of gamma and need gamma > 0")
    ratios = config.resolved_grid.values()
    if np.any(ratios <= 0):
        raise ConfigInvalid("coupling sweeps need g/gamma > 0")
    return ratios, [p.with_(g=float(r) * p.gamma) for r in ratios]


def cmd_sweep(config: RunConfig) -> Table:
    ratios, points = _coupling_points(config)
    gamma = config.params.gamma
    if config.mode in (Mode.SWEEP_TE, Mode.FIG2B):
        columns = ["g_over_gamma", "tE_gamma", "tE_weak_gamma", "tE_strong_gamma", "regime"]
        units = {"g_over_gamma": "1", "tE_gamma": "1/gamma", "tE_weak_gamma": "1/gamma",
                 "tE_strong_gamma": "1/gamma", "regime": "-1 overdamped, 0 exceptional point, 1 underdamped"}
        rows = [[float(r), an.optimal_time(q) * gamma, an.asymptotic_optimal_time(q, an.Limit.WEAK) * gamma,
                 an.asymptotic_optimal_time(q, an.Limit.STRONG) * gamma,
                 _REGIME_CODE[an.classify_regime(q).regime]] for r, q in zip(ratios, points)]
        return Table("sweep_tE", columns, units, rows)
    if config.mode in (Mode.SWEEP_EMAX, Mode.FIG2C):
        columns = ["g_over_gamma", "Emax_norm", "Emax_weak_norm", "Emax_strong_norm", "regime"]
        norm = "omega_b sinh^2(Omega)"
        units = {"g_over_gamma": "1", "Emax_norm": norm, "Emax_weak_norm": norm, "Emax_strong_norm": norm,
                 "regime": "-1 overdamped, 0 exceptional point, 1 underdamped"}
        rows = [[float(r), an.optimal_energy_fraction(q), an.asymptotic_energy_fraction(q, an.Limit.WEAK),
                 an.asymptotic_energy_fraction(q, an.Limit.STRONG),
                 _REGIME_CODE[an.classify_regime(q).regime]] for r, q in zip(ratios, points)]
        return Table("sweep_Emax", columns, units, rows)
    raise ConfigInvalid(f"mode {config.mode.value} is not a sweep")


# -- verification --------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationCase:
    g: float
    gamma: float
    Omega: float
    n_max: int | None
    rel_err_oracle: float
    rel_err_moments: float
    rel_err_squeeze: float
    truncation_weight: float
    first_moments: float
    conservation: float
    passed: bool
    note: str = ""

    @property
    def certified(self) -> bool:
        return self.truncation_weight < CERTIFIED_WEIGHT


@dataclass
class VerificationReport:
    cases: list
    tolerances: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.cases) and all(c.passed for c in self.cases)

    @property
    def max_oracle_error(self) -> float:
        errs = [c.rel_err_oracle for c in self.cases if not math.isnan(c.rel_err_oracle)]
        return max(errs) if errs else float("nan")

    def table(self) -> Table:
        columns = ["g", "gamma", "Omega", "n_max", "rel_err_oracle", "rel_err_moments", "rel_err_squeeze",
                   "truncation_weight", "first_moments", "conservation", "certified", "passed"]
        rows = [[c.g, c.gamma, c.Omega, -1 if c.n_max is None else int(c.n_max), c.rel_err_oracle,
                 c.rel_err_moments, c.rel_err_squeeze, c.truncation_weight, c.first_moments, c.conservation,
                 c.certified, c.passed] for c in self.cases]
        notes = {f"{i}": c.note for i, c in enumerate(self.cases) if c.note}
        meta = {"status": "PASS" if self.passed else "FAIL", "tolerances": self.tolerances, "notes": notes}
        return Table("verify", columns, {c: "" for c in columns}, rows, meta)


def _max_rel(x, ref, floor):
    x, ref = np.asarray(x), np.asarray(ref)
    return float(np.max(np.abs(x - ref) / np.maximum(np.abs(ref), floor))) if ref.size else 0.0


def _verify_case(args) -> VerificationCase:
    params, times, oracle, n_max, tol = args
    C = enhancement_factor(params)
    floor = 1e-12 * max(C, 1.0)
    ref = an.population_holder(params, times)
    sq_ref = math.sinh(params.Omega) * math.cosh(params.Omega) * an.excitation_fraction_P(params, times)
    pops, sqs = propagate_moment_vectors(post_pulse_moments(params.Omega), params, times)
    rel_m = _max_rel(pops[:, 1].real, ref, floor)
    rel_sq = _max_rel(np.abs(sqs[:, 1]), sq_ref, floor)
    conservation = float("nan")
    if params.gamma == 0:
        conservation = float(np.max(np.abs(pops[:, 0].real + pops[:, 1].real - C)))
    passed = rel_m < MOMENT_REL_TOL and rel_sq < MOMENT_REL_TOL
    if params.gamma == 0:
        passed = passed and conservation < CONSERVATION_TOL
    notes = []
    nan = float("nan")
    rel_o, weight, first, used = nan, nan, nan, n_max
    if oracle:
        try:
            reports = oracle_trace(params, times, n_max=n_max, tol=tol, squeezing=False, check=False)
        except TruncationInsufficient as exc:  # no cutoff could be chosen at all
            notes.append(str(exc))
            passed = False
        except HyperbatError as exc:
            notes.append(f"oracle failed: {exc}")
            passed = False
        else:
            nb = np.array([r.moments.n_b for r in reports])
            rel_o = _max_rel(nb, ref, floor)
            weight = max(r.truncation_weight for r in reports)
            first = max(r.first_moment_size for r in reports)
            if used is None:
                used = default_cutoff(params.Omega)
            if not weight < CERTIFIED_WEIGHT:
                notes.append(f"truncation certificate violated: weight {weight:.3e} >= {CERTIFIED_WEIGHT}")
            passed = passed and rel_o < ORACLE_REL_TOL and weight < CERTIFIED_WEIGHT and first < FIRST_MOMENT_TOL
    return VerificationCase(params.g, params.gamma, params.Omega, used, rel_o, rel_m, rel_sq, weight, first,
                            conservation, bool(passed), "; ".join(notes))


def verification_cases(config: RunConfig):
    p = config.params
    if config.g_values is not None:
        gs = config.g_values
    else:
        gs = tuple(r * p.gamma for r in CERT_G_RATIOS) if p.gamma > 0 else CERT_G_RATIOS
    omegas = config.omega_values if config.omega_values is not None else CERT_OMEGAS
    return [p.with_(g=g, Omega=om) for om in omegas for g in gs]


def cmd_verify(config: RunConfig) -> VerificationReport:
    cases = verification_cases(config)
    jobs_args = []
    for q in cases:
        grid = config.resolved_grid
        if grid.start < 0:
            raise ConfigInvalid("time grids must start at t >= 0")
        unit, _ = time_unit(q)
        jobs_args.append((q, grid.values() * unit, config.oracle, config.n_max, config.tol))
    if config.jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_verify_case, jobs_args))
    else:
        results = [_verify_case(a) for a in jobs_args]
    tolerances = {"oracle_relative": ORACLE_REL_TOL, "moments_relative": MOMENT_REL_TOL,
                  "truncation_weight": CERTIFIED_WEIGHT, "first_moments": FIRST_MOMENT_TOL,
                  "conservation": CONSERVATION_TOL}
    return VerificationReport(results, tolerances)


# -- figures ------------------------------------------------------------------------------


def fig2a_table(config: RunConfig) -> Table:
    p = config.params.with_(g=FIG2_G_RATIO * config.params.gamma) if config.params.gamma > 0 else config.params
    scaled, t, unit = _times(config.with_(params=p))
    E = an.excitation_fraction_P(p, t)  # E / (omega_b sinh^2 Omega)
    columns = ["t", "E_norm"]
    data = [scaled, E]
    for om in FIG2A_OMEGAS:
        q = p.with_(Omega=om)
        rec = an.ergotropy(q, t)
        columns.append(f"ergotropy_norm_Omega_{om:g}")
        data.append(_normalized(rec.ergotropy, q.omega_b * enhancement_factor(q)))
    units = {c: "omega_b sinh^2(Omega)" for c in columns}
    units["t"] = unit
    rows = [list(map(float, r)) for r in zip(*data)]
    return Table("fig2a", columns, units, rows, meta={"g_over_gamma": FIG2_G_RATIO, "Omega": list(FIG2A_OMEGAS)})


def figure_table(config: RunConfig) -> Table:
    if config.mode is Mode.FIG2A:
        return fig2a_table(config)
    if config.mode in (Mode.FIG2B, Mode.FIG2C):
        table = cmd_sweep(config)
        table.name = config.mode.value
        return table
    raise ConfigInvalid(f"mode {config.mode.value} is not a figure preset")


def plot_script(table: Table, data_file: str) -> str:
    lines = [
        "# plot script for gnuplot; reads only the data file named below",
        'set datafile separator ","',
        'set datafile commentschars "#"',
        "set key top right",
    ]
    if table.name == "fig2a":
        lines += ['set xlabel "gamma t"', 'set ylabel "energy / (omega_b sinh^2 Omega)"']
        parts = [f'"{data_file}" using 1:2 with lines lw 2 dt 2 title "E"']
        for i, col in enumerate(table.columns[2:], start=3):
            parts.append(f'"{data_file}" using 1:{i} with lines title "{col}"')
    else:
        ylabel = "gamma t_E" if table.name == "fig2b" else "E_max / (omega_b sinh^2 Omega)"
        lines += ["set logscale xy", 'set xlabel "g / gamma"', f'set ylabel "{ylabel}"']
        if table.name == "fig2c":
            lines.append("set yrange [*:1.5]")
        parts = [f'"{data_file}" using 1:2 with lines lw 2 title "exact"',
                 f'"{data_file}" using 1:3 with lines dt 2 title "weak coupling"',
                 f'"{data_file}" using 1:4 with lines dt 2 title "strong coupling"']
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


def write_figure(config: RunConfig, outdir) -> list[Path]:
    table = figure_table(config)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{table.name}.csv"
    written = [csv_path]
    csv_path.write_text(render(table, config, "csv"), encoding="utf-8")
    if config.format == "json":
        json_path = outdir / f"{table.name}.json"
        json_path.write_text(render(table, config, "json"), encoding="utf-8")
        written.append(json_path)
    script = outdir / f"{table.name}.gp"
    script.write_text(plot_script(table, csv_path.name), encoding="utf-8")
    written.append(script)
    return written


def default_jobs() -> int:
    raw = os.environ.get("HYPERBAT_JOBS")
    if raw is None or raw == "":
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigInvalid(f"HYPERBAT_JOBS must be a positive integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigInvalid(f"HYPERBAT_JOBS must be a positive integer, got {raw!r}")
    return jobs
