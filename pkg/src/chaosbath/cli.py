"""Command-line front end.

Subcommands map onto the pipeline stages: sample, spectrum, evolve-exact,
evolve-kraus, compare (one sweep point each), chaos-stats and echo (bath
diagnostics), report (re-emit saved report data), and run (the full
sweep).  Exit codes: 0 success, 1 configuration, 2 numerical failure,
3 capacity.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, dynamics, harness, kraus, spectral
from .errors import CapacityError, ConfigError, NumericError
from .model import assemble_hamiltonians, sample_parameters


def _spec_from_args(args) -> harness.ExperimentSpec:
    spec = harness.load_experiment(args.config)
    updates = {}
    if getattr(args, "out", None):
        updates["out_dir"] = args.out
    if getattr(args, "tol", None) is not None:
        updates["tol"] = args.tol
    if getattr(args, "m", None) is not None:
        updates["m_states"] = args.m
    if getattr(args, "t_max", None) is not None:
        updates["t_max"] = args.t_max
    if getattr(args, "n_samples", None) is not None:
        updates["n_samples"] = args.n_samples
    if updates:
        spec = replace(spec, **updates)
    spec.validate()
    return spec


def _point_config(spec: harness.ExperimentSpec, args):
    jx = args.jx if args.jx is not None else spec.model.jx_max
    seed = args.seed if args.seed is not None else spec.model.seed
    return replace(spec.model, jx_max=jx, seed=seed), jx, seed


def _point_setup(spec, args):
    config, jx, seed = _point_config(spec, args)
    params = sample_parameters(config)
    hams = assemble_hamiltonians(params)
    bath, coupling = spectral.thermal_bath(
        hams.h_bath, hams.coupling_bath, config.kt, spec.m_states
    )
    return config, jx, seed, params, hams, bath, coupling


def _out_dir(spec) -> Path:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sample(args) -> int:
    spec = _spec_from_args(args)
    config, jx, seed = _point_config(spec, args)
    params = sample_parameters(config)
    out = _out_dir(spec) / f"params_jx{jx:g}_seed{seed}.json"
    out.write_text(params.to_json() + "\n")
    print(out)
    return 0


def cmd_spectrum(args) -> int:
    spec = _spec_from_args(args)
    _, jx, seed, _, hams, bath, coupling = _point_setup(spec, args)
    out = _out_dir(spec)
    path = out / f"spectrum_jx{jx:g}_seed{seed}.csv"
    spectral.spectrum_to_csv(bath, path)
    (out / f"coupling_jx{jx:g}_seed{seed}.json").write_text(coupling.to_json() + "\n")
    print(path)
    return 0


def cmd_evolve_exact(args) -> int:
    spec = _spec_from_args(args)
    _, jx, seed, _, hams, bath, _ = _point_setup(spec, args)
    traj = dynamics.exact_reduced_trajectory(
        hams, bath, times=spec.times, tol=spec.tol
    )
    path = _out_dir(spec) / f"exact_jx{jx:g}_seed{seed}.csv"
    traj.to_csv(path)
    print(path)
    return 0


def cmd_evolve_kraus(args) -> int:
    spec = _spec_from_args(args)
    _, jx, seed, _, hams, bath, _ = _point_setup(spec, args)
    ensemble = kraus.build_ensemble(hams.h_system, hams.coupling_system, bath)
    psi0 = dynamics.SUPERPOSITION_STATE
    traj = kraus.propagate_kraus(ensemble, np.outer(psi0, psi0.conj()), spec.times)
    path = _out_dir(spec) / f"kraus_jx{jx:g}_seed{seed}.csv"
    traj.to_csv(path)
    print(path)
    return 0


def cmd_compare(args) -> int:
    spec = _spec_from_args(args)
    config, jx, seed = _point_config(spec, args)
    result = harness.run_point(spec, jx, seed)
    out = _out_dir(spec)
    tag = f"jx{jx:g}_seed{seed}"
    result.exact.to_csv(out / f"exact_{tag}.csv")
    result.kraus_.to_csv(out / f"kraus_{tag}.csv")
    doc = {k: getattr(result, k) for k in
           ("jx", "seed", "mean_dp", "mean_df", "max_dp", "max_df",
            "range_p", "range_f", "shift_ratio", "offdiag_ratio")}
    path = out / f"compare_{tag}.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(path)
    return 0


def cmd_chaos_stats(args) -> int:
    spec = _spec_from_args(args)
    out = _out_dir(spec)
    summary = {}
    for jx in spec.jx_values:
        for seed in spec.seeds:
            config = replace(spec.model, jx_max=jx, seed=seed)
            params = sample_parameters(config)
            hams = assemble_hamiltonians(params)
            bath = spectral.diagonalize_bath(
                hams.h_bath, min(spec.n_levels, 1 << params.n_bath)
            )
            unfolded, degree = diagnostics.unfold_with_fallback(
                bath.energies, spec.unfold_degree
            )
            stats = diagnostics.spacing_distribution(
                unfolded, raw_energies=bath.energies, degree=degree
            )
            tag = f"jx{jx:g}_seed{seed}"
            stats.to_csv(out / f"spacing_{tag}.csv")
            summary[tag] = stats.summary()
    path = out / "spacing_summary.json"
    path.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(path)
    return 0


def cmd_echo(args) -> int:
    spec = _spec_from_args(args)
    out = _out_dir(spec)
    rates = {}
    for jx in spec.jx_values:
        for seed in spec.seeds:
            config = replace(spec.model, jx_max=jx, seed=seed)
            params = sample_parameters(config)
            hams = assemble_hamiltonians(params)
            tag = f"jx{jx:g}_seed{seed}"
            short = np.linspace(0.0, spec.echo_t_short, spec.echo_samples)
            longg = np.linspace(0.0, spec.echo_t_long, spec.echo_samples)
            es = diagnostics.loschmidt_echo(
                hams.h_bath_onebody, hams.h_bath_twobody, short
            )
            el = diagnostics.loschmidt_echo(
                hams.h_bath_onebody, hams.h_bath_twobody, longg
            )
            es.to_csv(out / f"echo_short_{tag}.csv")
            el.to_csv(out / f"echo_long_{tag}.csv")
            rates[tag] = diagnostics.echo_decay_rate(es)
    path = out / "echo_rates.json"
    path.write_text(json.dumps(rates, indent=1, sort_keys=True) + "\n")
    print(path)
    return 0


def cmd_report(args) -> int:
    spec = _spec_from_args(args)
    report = harness.run_experiment(spec, write=False)
    paths = harness.emit_report(report, spec.out_dir, formats=tuple(args.formats))
    for p in paths:
        print(p)
    return 0


def cmd_run(args) -> int:
    spec = _spec_from_args(args)
    report = harness.run_full(spec)
    failed = [r for r in report.rows if r.error]
    print(Path(spec.out_dir) / "report.json")
    if failed:
        for r in failed:
            print(f"point jx={r.jx:g} seed={r.seed} failed: {r.error}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaosbath",
        description="Chaotic spin-bath decoherence: exact vs unitary-ensemble channel",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, point_args=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment spec file")
        p.add_argument("--out", help="output directory (overrides spec)")
        p.add_argument("--tol", type=float, help="integrator tolerance override")
        p.add_argument("--m", type=int, help="retained bath states override")
        p.add_argument("--t-max", dest="t_max", type=float, help="time window override")
        p.add_argument("--n-samples", dest="n_samples", type=int,
                       help="sample count override")
        if point_args:
            p.add_argument("--jx", type=float, help="intra-bath coupling override")
            p.add_argument("--seed", type=int, help="seed override")
        p.set_defaults(fn=fn)
        return p

    add("sample", cmd_sample, "draw couplings and export them", point_args=True)
    add("spectrum", cmd_spectrum, "bath spectrum, weights, coupling diagonal",
        point_args=True)
    add("evolve-exact", cmd_evolve_exact, "exact reduced trajectory", point_args=True)
    add("evolve-kraus", cmd_evolve_kraus, "unitary-ensemble trajectory",
        point_args=True)
    add("compare", cmd_compare, "exact vs channel at one sweep point",
        point_args=True)
    add("chaos-stats", cmd_chaos_stats, "level-spacing statistics per sweep point")
    add("echo", cmd_echo, "echo series per sweep point")
    rep = add("report", cmd_report, "run the comparison sweep and emit report files")
    rep.add_argument("--formats", nargs="+", default=["json", "csv", "text"],
                     choices=["json", "csv", "text"])
    add("run", cmd_run, "full pipeline: comparison sweep plus chaos suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
