"""Experiment orchestration: sweeps, comparisons, chaos suite, reports.

One sweep point = one (jx, seed) pair run through the full pipeline:
sample couplings, assemble operators, diagonalize the bath, propagate the
exact reference, apply the unitary-ensemble channel, and compare purity
and fidelity series.  Points run in a process pool; all reductions and
file writes happen in the parent in a fixed order, so identical specs
produce byte-identical outputs (timestamps are confined to metadata.json).
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics, dynamics, kraus, spectral
from .errors import ChaosbathError, ConfigError
from .model import (
    ModelConfig,
    _CONFIG_KEYS,
    assemble_hamiltonians,
    parse_config_lines,
    sample_parameters,
)

WORKERS_ENV = "CHAOSBATH_WORKERS"


# ---------------------------------------------------------------------------
# experiment specification


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce a full run."""

    model: ModelConfig
    t_max: float = 300.0
    n_samples: int = 600
    m_states: int = 20
    tol: float = 1e-10
    jx_values: tuple = (0.5, 1.0, 2.0)
    seeds: tuple = (1, 2, 3, 4, 5)
    out_dir: str = "chaosbath-out"
    unfold_degree: int = 7
    n_levels: int = 200
    echo_t_short: float = 10.0
    echo_t_long: float = 300.0
    echo_samples: int = 400

    def validate(self) -> None:
        self.model.validate()
        if self.t_max <= 0:
            raise ConfigError(f"t_max must be > 0, got {self.t_max}")
        if self.n_samples < 2:
            raise ConfigError(f"n_samples must be >= 2, got {self.n_samples}")
        if self.m_states < 1:
            raise ConfigError(f"m must be >= 1, got {self.m_states}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if not self.jx_values or not self.seeds:
            raise ConfigError("sweep lists (jx_values, seeds) must be nonempty")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_samples)

    @property
    def points(self) -> list:
        return [(jx, seed) for jx in self.jx_values for seed in self.seeds]


_SPEC_KEYS = {
    "t_max": ("t_max", float),
    "n_samples": ("n_samples", int),
    "m": ("m_states", int),
    "tol": ("tol", float),
    "out_dir": ("out_dir", str),
    "degree": ("unfold_degree", int),
    "n_levels": ("n_levels", int),
    "echo_t_short": ("echo_t_short", float),
    "echo_t_long": ("echo_t_long", float),
    "echo_samples": ("echo_samples", int),
}


def _parse_list(text: str, cast):
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ConfigError(f"empty list value: {text!r}")
    return tuple(cast(item) for item in items)


def load_experiment(path) -> ExperimentSpec:
    """Read an experiment spec (model keys plus harness keys) from a file."""
    raw = parse_config_lines(Path(path).read_text().splitlines())
    model_kwargs = {}
    spec_kwargs = {}
    for key, value in raw.items():
        try:
            if key in _CONFIG_KEYS:
                name, cast = _CONFIG_KEYS[key]
                model_kwargs[name] = cast(value)
            elif key in _SPEC_KEYS:
                name, cast = _SPEC_KEYS[key]
                spec_kwargs[name] = cast(value)
            elif key == "jx_list":
                spec_kwargs["jx_values"] = _parse_list(value, float)
            elif key == "seed_list":
                spec_kwargs["seeds"] = _parse_list(value, int)
            else:
                raise ConfigError(f"unknown experiment key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    if "n_bath" not in model_kwargs:
        raise ConfigError("experiment spec must set n_bath")
    spec = ExperimentSpec(model=ModelConfig(**model_kwargs), **spec_kwargs)
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# one sweep point


@dataclass
class PointResult:
    """Comparison metrics for one (jx, seed) sweep point."""

    jx: float
    seed: int
    mean_dp: float = np.nan
    mean_df: float = np.nan
    max_dp: float = np.nan
    max_df: float = np.nan
    range_p: float = np.nan       # max_t (1 - P_exact)
    range_f: float = np.nan       # max_t (1 - F_exact)
    min_p_exact: float = np.nan
    min_p_kraus: float = np.nan
    min_f_exact: float = np.nan
    min_f_kraus: float = np.nan
    shift_ratio: float = np.nan   # (1 - min F_exact) / (1 - min P_exact)
    offdiag_ratio: float = np.nan
    tail_weight: float = np.nan
    norm_drift: float = np.nan
    echo_rate: float | None = None
    d_poisson: float | None = None
    d_wigner_dyson: float | None = None
    degree_used: int | None = None
    error: str | None = None

    params_json: str | None = field(default=None, repr=False)
    exact: dynamics.Trajectory | None = field(default=None, repr=False)
    kraus_: dynamics.Trajectory | None = field(default=None, repr=False)
    spectrum: spectral.BathSpectrum | None = field(default=None, repr=False)
    spacing_stats: diagnostics.SpacingStatistics | None = field(default=None, repr=False)
    echo_short: diagnostics.EchoSeries | None = field(default=None, repr=False)
    echo_long: diagnostics.EchoSeries | None = field(default=None, repr=False)


_METRIC_KEYS = [
    "mean_dp", "mean_df", "max_dp", "max_df", "range_p", "range_f",
    "min_p_exact", "min_p_kraus", "min_f_exact", "min_f_kraus",
    "shift_ratio", "offdiag_ratio", "tail_weight", "norm_drift",
    "echo_rate", "d_poisson", "d_wigner_dyson", "degree_used",
]


def run_point(spec: ExperimentSpec, jx: float, seed: int) -> PointResult:
    """Full exact-vs-channel comparison at one sweep point."""
    config = replace(spec.model, jx_max=jx, seed=seed)
    params = sample_parameters(config)
    hams = assemble_hamiltonians(params)
    spectrum, coupling = spectral.thermal_bath(
        hams.h_bath, hams.coupling_bath, config.kt, spec.m_states
    )
    times = spec.times
    exact = dynamics.exact_reduced_trajectory(
        hams, spectrum, times=times, tol=spec.tol
    )
    ensemble = kraus.build_ensemble(
        hams.h_system, hams.coupling_system, spectrum
    )
    psi0 = dynamics.SUPERPOSITION_STATE
    channel = kraus.propagate_kraus(ensemble, np.outer(psi0, psi0.conj()), times)

    dp = np.abs(exact.purity - channel.purity)
    df = np.abs(exact.fidelity - channel.fidelity)
    range_p = float(np.max(1.0 - exact.purity))
    range_f = float(np.max(1.0 - exact.fidelity))
    one_minus_p = 1.0 - float(exact.purity.min())
    shift = (1.0 - float(exact.fidelity.min())) / one_minus_p if one_minus_p > 0 else np.inf
    return PointResult(
        jx=jx,
        seed=seed,
        mean_dp=float(dp.mean()),
        mean_df=float(df.mean()),
        max_dp=float(dp.max()),
        max_df=float(df.max()),
        range_p=range_p,
        range_f=range_f,
        min_p_exact=float(exact.purity.min()),
        min_p_kraus=float(channel.purity.min()),
        min_f_exact=float(exact.fidelity.min()),
        min_f_kraus=float(channel.fidelity.min()),
        shift_ratio=float(shift),
        offdiag_ratio=spectral.offdiag_suppression(coupling).ratio,
        tail_weight=float(spectrum.weights[-1]),
        norm_drift=exact.norm_drift,
        params_json=params.to_json(),
        exact=exact,
        kraus_=channel,
        spectrum=spectrum,
    )


def run_chaos_point(spec: ExperimentSpec, jx: float, seed: int) -> PointResult:
    """Level statistics and echo for one sweep point (bath only)."""
    config = replace(spec.model, jx_max=jx, seed=seed)
    params = sample_parameters(config)
    hams = assemble_hamiltonians(params)
    result = PointResult(jx=jx, seed=seed, params_json=params.to_json())

    bath = spectral.diagonalize_bath(hams.h_bath, min(spec.n_levels, 1 << params.n_bath))
    unfolded, degree_used = diagnostics.unfold_with_fallback(
        bath.energies, spec.unfold_degree
    )
    stats = diagnostics.spacing_distribution(
        unfolded, raw_energies=bath.energies, degree=degree_used
    )
    result.d_poisson = stats.d_poisson
    result.d_wigner_dyson = stats.d_wigner_dyson
    result.degree_used = degree_used
    result.spacing_stats = stats

    short = np.linspace(0.0, spec.echo_t_short, spec.echo_samples)
    longg = np.linspace(0.0, spec.echo_t_long, spec.echo_samples)
    echo_short = diagnostics.loschmidt_echo(hams.h_bath_onebody, hams.h_bath_twobody, short)
    echo_long = diagnostics.loschmidt_echo(hams.h_bath_onebody, hams.h_bath_twobody, longg)
    result.echo_rate = diagnostics.echo_decay_rate(echo_short)
    result.echo_short = echo_short
    result.echo_long = echo_long
    return result


def _safe_point(fn, spec, jx, seed) -> PointResult:
    try:
        return fn(spec, jx, seed)
    except Exception as exc:  # isolate sweep-point failures
        return PointResult(jx=jx, seed=seed, error=f"{type(exc).__name__}: {exc}")


def _pool_size(n_points: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            workers = int(env)
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    else:
        workers = os.cpu_count() or 1
    return max(1, min(workers, n_points))


def _run_points(fn, spec: ExperimentSpec) -> list:
    points = spec.points
    workers = _pool_size(len(points))
    if workers == 1:
        return [_safe_point(fn, spec, jx, seed) for jx, seed in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_safe_point, fn, spec, jx, seed) for jx, seed in points]
        return [f.result() for f in futures]  # submission order = deterministic


# ---------------------------------------------------------------------------
# reports


@dataclass
class ComparisonReport:
    """Per-point metrics plus the cross-point summaries used for acceptance."""

    spec: ExperimentSpec
    rows: list

    def row(self, jx: float, seed: int) -> PointResult | None:
        for r in self.rows:
            if r.jx == jx and r.seed == seed:
                return r
        return None

    def ordering_by_seed(self) -> dict:
        """seed -> True when mean |dP| strictly decreases with jx."""
        jxs = sorted(self.spec.jx_values)
        out = {}
        for seed in self.spec.seeds:
            vals = []
            for jx in jxs:
                r = self.row(jx, seed)
                if r is None or r.error or not np.isfinite(r.mean_dp):
                    vals = None
                    break
                vals.append(r.mean_dp)
            if vals is None:
                out[seed] = None
            else:
                out[seed] = all(b < a for a, b in zip(vals, vals[1:]))
        return out

    def to_dict(self) -> dict:
        rows = []
        for r in sorted(self.rows, key=lambda r: (r.jx, r.seed)):
            entry = {"jx": r.jx, "seed": r.seed, "error": r.error}
            for key in _METRIC_KEYS:
                value = getattr(r, key, None)
                if value is None:
                    entry[key] = None
                elif isinstance(value, float) and not np.isfinite(value):
                    entry[key] = repr(value)
                else:
                    entry[key] = value
            rows.append(entry)
        ordering = {str(k): v for k, v in self.ordering_by_seed().items()}
        return {
            "model": asdict(self.spec.model),
            "sweep": {
                "jx_values": list(self.spec.jx_values),
                "seeds": list(self.spec.seeds),
                "t_max": self.spec.t_max,
                "n_samples": self.spec.n_samples,
                "m": self.spec.m_states,
                "tol": self.spec.tol,
            },
            "rows": rows,
            "dp_ordering_by_seed": ordering,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_text(self) -> str:
        """Plain-text table: one panel per jx, exact vs channel columns."""
        if not self.rows:
            raise ConfigError("empty report")
        lines = []
        for jx in sorted(self.spec.jx_values):
            lines.append(f"== jx = {jx:g} ==")
            lines.append(
                f"{'seed':>6} {'minP exact':>12} {'minP kraus':>12} "
                f"{'minF exact':>12} {'minF kraus':>12} {'mean|dP|':>11} "
                f"{'mean|dF|':>11} {'shiftF/P':>9}"
            )
            for seed in self.spec.seeds:
                r = self.row(jx, seed)
                if r is None:
                    continue
                if r.error:
                    lines.append(f"{seed:>6} ERROR {r.error}")
                    continue
                lines.append(
                    f"{seed:>6} {r.min_p_exact:12.6f} {r.min_p_kraus:12.6f} "
                    f"{r.min_f_exact:12.6f} {r.min_f_kraus:12.6f} "
                    f"{r.mean_dp:11.3e} {r.mean_df:11.3e} {r.shift_ratio:9.3g}"
                )
            lines.append("")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["jx", "seed"] + _METRIC_KEYS + ["error"])
            for r in sorted(self.rows, key=lambda r: (r.jx, r.seed)):
                row = [f"{r.jx:g}", r.seed]
                for key in _METRIC_KEYS:
                    value = getattr(r, key, None)
                    row.append("" if value is None else f"{value:.17g}")
                row.append(r.error or "")
                writer.writerow(row)


def _point_tag(jx: float, seed: int) -> str:
    return f"jx{jx:g}_seed{seed}"


def run_experiment(spec: ExperimentSpec, write: bool = True) -> ComparisonReport:
    """Exact-vs-channel comparison over the whole sweep."""
    spec.validate()
    rows = _run_points(run_point, spec)
    report = ComparisonReport(spec=spec, rows=rows)
    if write:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in sorted(rows, key=lambda r: (r.jx, r.seed)):
            tag = _point_tag(r.jx, r.seed)
            if r.error:
                (out / f"error_{tag}.txt").write_text(r.error + "\n")
                continue
            (out / f"params_{tag}.json").write_text(r.params_json + "\n")
            spectral.spectrum_to_csv(r.spectrum, out / f"spectrum_{tag}.csv")
            r.exact.to_csv(out / f"exact_{tag}.csv")
            r.kraus_.to_csv(out / f"kraus_{tag}.csv")
        emit_report(report, out)
        _write_metadata(out, spec)
    return report


def run_chaos_suite(spec: ExperimentSpec, write: bool = True) -> ComparisonReport:
    """Level statistics and echo series over the sweep."""
    spec.validate()
    rows = _run_points(run_chaos_point, spec)
    report = ComparisonReport(spec=spec, rows=rows)
    if write:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in sorted(rows, key=lambda r: (r.jx, r.seed)):
            tag = _point_tag(r.jx, r.seed)
            if r.error:
                (out / f"error_chaos_{tag}.txt").write_text(r.error + "\n")
                continue
            stats = getattr(r, "spacing_stats", None)
            if stats is not None:
                stats.to_csv(out / f"spacing_{tag}.csv")
                (out / f"spacing_{tag}.json").write_text(stats.summary_json() + "\n")
            if getattr(r, "echo_short", None) is not None:
                r.echo_short.to_csv(out / f"echo_short_{tag}.csv")
                r.echo_long.to_csv(out / f"echo_long_{tag}.csv")
        (out / "chaos_report.json").write_text(report.to_json() + "\n")
        _write_metadata(out, spec)
    return report


def run_full(spec: ExperimentSpec) -> ComparisonReport:
    """Comparison sweep plus chaos suite, merged into one report."""
    comparison = run_experiment(spec)
    chaos = run_chaos_suite(spec, write=True)
    for row in comparison.rows:
        other = chaos.row(row.jx, row.seed)
        if other is not None and not other.error:
            row.echo_rate = other.echo_rate
            row.d_poisson = other.d_poisson
            row.d_wigner_dyson = other.d_wigner_dyson
            row.degree_used = other.degree_used
    emit_report(comparison, Path(spec.out_dir))
    return comparison


def emit_report(report: ComparisonReport, out_dir, formats=("json", "csv", "text")) -> list:
    """Write the report files; returns the paths written."""
    if not report.rows:
        raise ConfigError("refusing to emit an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(report.to_json() + "\n")
        written.append(path)
    if "csv" in formats:
        path = out / "report.csv"
        report.to_csv(path)
        written.append(path)
    if "text" in formats:
        path = out / "report.txt"
        path.write_text(report.to_text() + "\n")
        written.append(path)
    return written


def _write_metadata(out: Path, spec: ExperimentSpec) -> None:
    # the only file allowed to differ between identical reruns
    meta = {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "workers": _pool_size(len(spec.points)),
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=1) + "\n")


def validate_outputs(out_dir) -> list:
    """Post-hoc check of every emitted trajectory CSV; returns defects."""
    problems = []
    for path in sorted(Path(out_dir).glob("*.csv")):
        if not (path.name.startswith("exact_") or path.name.startswith("kraus_")):
            continue
        traj = dynamics.Trajectory.from_csv(path)
        for i in range(len(traj)):
            try:
                dynamics.check_density(traj.rhos[i], herm_tol=1e-12,
                                       trace_tol=1e-10, psd_floor=-1e-10)
            except ChaosbathError as exc:
                problems.append(f"{path.name}@t={traj.times[i]:g}: {exc}")
    return problems
