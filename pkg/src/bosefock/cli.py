"""Command-line front end.

Subcommands:
  optimize      run the training loop; writes trajectory.csv, checkpoints,
                summary.json, and trajectory.png into the output directory
  evaluate      load a checkpoint, sample, and write density/OBDM CSVs,
                summary.json, and the matching figures
  bench         list the published benchmark targets or re-derive the
                closed-form rows from their oracles
  sample-check  validate the sampler against analytic sector laws

Exit status is 0 on success; config and checkpoint problems print a
diagnostic to stderr and return 1 (argparse usage errors exit 2).  All
randomness descends from --seed / run.seed, so repeated invocations write
byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import jax.numpy as jnp
import numpy as np
import scipy.stats
from jax.scipy.special import gammaln
from scipy.special import factorial

from .ansatz import build_layout, init_params, make_log_amp_fn
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .models import DomainSpec, ModelSpec
from .observables import (
    condensate_fraction,
    density_profile,
    energy_estimate,
    number_distribution,
    obdm_translation_invariant,
    projected_obdm,
    radial_density_profile,
    rescaled_variance,
    scalar_estimate,
)
from .optimizer import TRAJECTORY_COLUMNS, optimize
from .reference import CATALOG, cs1d_energy, cs2d_energy, grand_minimizer, tg_energy
from .sampler import SamplerSettings, run_chains

# geometries behind the benchmark catalog: unit hard-wall box, L=5 ring,
# omega=1 trap
_BENCH_GEOMETRY = {"lieb_liniger": 1.0, "cs1d": 5.0, "cs2d": 1.0}
_BENCH_RTOL = 1e-3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bosefock", description="Fock-space variational Monte Carlo"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run the energy minimization loop")
    p_opt.add_argument("--config", required=True, help="run configuration file")
    p_opt.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_opt.add_argument("--out", default=None, help="override the output directory")
    p_opt.add_argument("--checkpoint", default=None,
                       help="resume from this checkpoint")
    p_opt.add_argument("--iterations-override", type=int, default=None)
    p_opt.add_argument("--chains-override", type=int, default=None)
    p_opt.set_defaults(func=cmd_optimize)

    p_eval = sub.add_parser("evaluate", help="sample a checkpointed state")
    p_eval.add_argument("--config", required=True, help="run configuration file")
    p_eval.add_argument("--checkpoint", required=True,
                        help="checkpoint holding the parameters")
    p_eval.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_eval.add_argument("--out", default=None, help="override the output directory")
    p_eval.add_argument("--chains-override", type=int, default=None)
    p_eval.set_defaults(func=cmd_evaluate)

    p_bench = sub.add_parser("bench", help="published benchmark targets")
    p_bench.add_argument("action", choices=("list", "check"))
    p_bench.add_argument("name", nargs="?", default="all",
                         help="model kind to check (default: all)")
    p_bench.set_defaults(func=cmd_bench)

    p_check = sub.add_parser("sample-check",
                             help="sampler validation against analytic laws")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.set_defaults(func=cmd_sample_check)
    return parser


# --- optimize ----------------------------------------------------------------


def _format_row(row) -> str:
    parts = [str(row.iteration)]
    parts += [repr(float(v)) for v in row.values()[1:]]
    return ",".join(parts)


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    out_dir = Path(cfg.out_dir if args.out is None else args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    sampler = cfg.sampler
    if args.chains_override is not None:
        sampler = dataclasses.replace(sampler, chains=args.chains_override)
    opt_settings = cfg.optimizer
    if args.iterations_override is not None:
        opt_settings = dataclasses.replace(
            opt_settings, iterations=args.iterations_override
        )

    initial_params = None
    start_iteration = 0
    if args.checkpoint is not None:
        ckpt = load_checkpoint(args.checkpoint, expect_hyper=cfg.hyper)
        initial_params = ckpt.params
        start_iteration = ckpt.iteration

    rolling = out_dir / "checkpoint.ckpt"
    csv_path = out_dir / "trajectory.csv"
    with open(csv_path, "w") as stream:
        stream.write(",".join(TRAJECTORY_COLUMNS) + "\n")

        def on_iteration(row, params):
            stream.write(_format_row(row) + "\n")
            stream.flush()
            done = row.iteration + 1
            if done % cfg.checkpoint_interval == 0:
                save_checkpoint(rolling, params, cfg.hyper, cfg.factors,
                                iteration=start_iteration + done)

        result = optimize(
            cfg.model, cfg.hyper, cfg.factors, sampler, opt_settings,
            seed=seed, initial_params=initial_params,
            initial_n=cfg.initial_n, on_iteration=on_iteration,
        )

    save_checkpoint(out_dir / "final.ckpt", result.params, cfg.hyper, cfg.factors,
                    iteration=start_iteration + len(result.rows))
    last = result.rows[-1]
    summary = {
        "aborted": result.aborted,
        "energy": _js(last.energy),
        "energy_stderr": _js(last.energy_stderr),
        "iterations_run": len(result.rows),
        "mean_n": _js(last.mean_n),
        "method": opt_settings.method,
        "n_params": build_layout(cfg.hyper).size,
        "rescaled_variance": _js(last.rescaled_variance),
        "seed": seed,
        "stderr_n": _js(last.stderr_n),
    }
    _write_json(out_dir / "summary.json", summary)

    from . import reports

    reports.plot_trajectory(result.rows, out_dir / "trajectory.png")
    if result.aborted:
        print(f"aborted: non-finite energy at iteration {last.iteration}",
              file=sys.stderr)
        return 1
    print(f"optimize: {len(result.rows)} iterations, "
          f"energy {last.energy:.6g} +- {last.energy_stderr:.2g}, "
          f"<n> {last.mean_n:.4g}  ->  {out_dir}")
    return 0


# --- evaluate ----------------------------------------------------------------


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    out_dir = Path(cfg.out_dir if args.out is None else args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = load_checkpoint(args.checkpoint, expect_hyper=cfg.hyper)

    sampler = cfg.sampler
    if args.chains_override is not None:
        sampler = dataclasses.replace(sampler, chains=args.chains_override)

    model = cfg.model
    logamp = make_log_amp_fn(cfg.hyper, cfg.factors)
    batch = run_chains(sampler, model, logamp, ckpt.params,
                       n_max=cfg.hyper.n_max, initial_n=cfg.initial_n, seed=seed)

    energy = energy_estimate(batch, model, logamp, ckpt.params)
    number = scalar_estimate(batch.ns.astype(np.float64))
    e_by_chain = _energies_by_chain(batch, model, logamp, ckpt.params)
    variance = rescaled_variance(e_by_chain, number.mean)
    probs, probs_err = number_distribution(batch, cfg.hyper.n_max)
    rates = batch.acceptance()

    from . import reports

    length = model.domain.box_length
    if model.domain.spatial_dim == 1:
        edges = np.linspace(0.0, length, cfg.density_bins + 1)
        centers, dens, dens_err = density_profile(batch, edges, axis=0)
        xlabel = "x"
    else:
        # cover the whole window: corner samples sit at the half-diagonal
        r_max = 0.5 * length * math.sqrt(2.0) + 1e-9
        edges = np.linspace(0.0, r_max, cfg.density_bins + 1)
        centers, dens, dens_err = radial_density_profile(
            batch, edges, model.trap_center
        )
        xlabel = "r"
    _write_csv(out_dir / "density.csv", (xlabel, "density", "stderr"),
               zip(centers, dens, dens_err))
    reports.plot_density(centers, dens, dens_err, out_dir / "density.png",
                         xlabel=xlabel)

    summary = {
        "acceptance": {k: _js(v) for k, v in rates.items()},
        "chains": batch.chains,
        "energy": _js(energy.mean),
        "energy_stderr": _js(energy.stderr),
        "mean_n": _js(number.mean),
        "number_distribution": [_js(p) for p in probs],
        "number_distribution_stderr": [_js(p) for p in probs_err],
        "rescaled_variance": _js(variance),
        "samples_per_chain": batch.samples_per_chain,
        "seed": seed,
        "stderr_n": _js(number.stderr),
        "stuck": bool(batch.stuck),
    }

    if model.domain.boundary == "periodic":
        shifts = np.arange(cfg.obdm_points) * (length / cfg.obdm_points)
        values, stderr = obdm_translation_invariant(
            batch, model, logamp, ckpt.params, shifts
        )
        _write_csv(out_dir / "obdm.csv", ("displacement", "value", "stderr"),
                   zip(shifts, values, stderr))
        reports.plot_obdm_curve(shifts, values, stderr, out_dir / "obdm.png")
    elif model.domain.boundary == "window":
        obdm = projected_obdm(batch, model, logamp, ckpt.params,
                              max_shell=cfg.obdm_max_shell, seed=seed)
        fraction = condensate_fraction(obdm, number.mean) if number.mean > 0 else None
        rows = (
            (i, j, *obdm.labels[i], *obdm.labels[j],
             obdm.matrix[i, j], obdm.stderr[i, j])
            for i in range(obdm.basis_size)
            for j in range(obdm.basis_size)
        )
        _write_csv(out_dir / "obdm.csv",
                   ("i", "j", "nx_i", "ny_i", "nx_j", "ny_j", "value", "stderr"),
                   rows)
        reports.plot_obdm_matrix(obdm.matrix, out_dir / "obdm.png",
                                 condensate_fraction=fraction)
        summary["condensate_fraction"] = _js(fraction)
        summary["obdm_trace"] = _js(obdm.trace())
    # closed boxes get no OBDM output: neither estimator applies there

    _write_json(out_dir / "summary.json", summary)
    print(f"evaluate: energy {energy.mean:.6g} +- {energy.stderr:.2g}, "
          f"<n> {number.mean:.4g}  ->  {out_dir}")
    return 0


def _energies_by_chain(batch, model, logamp, params):
    from .observables import batch_local_energies

    return batch_local_energies(batch, model, logamp, params)


# --- bench -------------------------------------------------------------------


def _bench_oracle(row):
    """Re-derive a catalog row from its closed form, or None if catalog-only."""
    if row.note == "catalog only":
        return None
    length = _BENCH_GEOMETRY[row.model]
    if row.model == "lieb_liniger":  # hard-core limit: free-fermion filling
        energy_fn = lambda n: tg_energy(n, length)  # noqa: E731
    elif row.model == "cs1d":
        energy_fn = lambda n: cs1d_energy(n, row.coupling, length)  # noqa: E731
    else:
        energy_fn = lambda n: cs2d_energy(n, row.coupling, length)  # noqa: E731
    return grand_minimizer(energy_fn, row.mu, 4 * row.n0 + 8)


def cmd_bench(args) -> int:
    if args.action == "check" and args.name != "all":
        rows = [r for r in CATALOG if r.model == args.name]
        if not rows:
            kinds = sorted({r.model for r in CATALOG})
            print(f"error: no benchmark rows for {args.name!r} "
                  f"(choose from {', '.join(kinds)} or all)", file=sys.stderr)
            return 1
    else:
        rows = list(CATALOG)

    if args.action == "list":
        for row in rows:
            note = f"  [{row.note}]" if row.note else ""
            print(f"{row.model:<13} g={row.coupling:<10g} mu={row.mu:<10g} "
                  f"energy={row.energy!r} n0={row.n0}{note}")
        return 0

    failed = False
    for row in rows:
        oracle = _bench_oracle(row)
        if oracle is None:
            print(f"{row.model:<13} g={row.coupling:<10g} "
                  f"table {row.energy!r}  (catalog only, no closed form)")
            continue
        value, n_min = oracle
        ok = (
            abs(value - row.energy) <= _BENCH_RTOL * abs(row.energy)
            and n_min == row.n0
        )
        failed |= not ok
        print(f"{row.model:<13} g={row.coupling:<10g} table {row.energy!r}  "
              f"recomputed {value:.6g} n0={n_min}  {'OK' if ok else 'MISMATCH'}")
    print("PASS" if not failed else "FAIL")
    return 0 if not failed else 1


# --- sample-check ------------------------------------------------------------


def _sector_chi2(batch, expected_probs, lump_from=None):
    """Chi-square p-value of the sampled sector counts against a law.

    `lump_from` merges all sectors >= that index into one bin so every
    expected count stays in chi-square territory.
    """
    n_max = len(expected_probs) - 1
    counts = np.bincount(batch.flat_ns(), minlength=n_max + 1).astype(np.float64)
    expected = np.asarray(expected_probs) * counts.sum()
    if lump_from is not None:
        counts = np.append(counts[:lump_from], counts[lump_from:].sum())
        expected = np.append(expected[:lump_from], expected[lump_from:].sum())
    return scipy.stats.chisquare(counts, expected).pvalue, counts


def cmd_sample_check(args) -> int:
    seed = args.seed
    box = ModelSpec("lieb_liniger", DomainSpec(1, 1.0, "closed"),
                    coupling=1.0, mu=0.0)
    checks = []

    # The chi-square assumes independent draws, so each trial thins hard
    # enough that sector occupancy decorrelates between retained samples
    # (rare high-n sectors relax slowest, hence the heavier Poisson sweep).

    # 1. constant amplitude, alpha = 0.8 on the unit box: truncated geometric
    #    with ratio r = alpha^2 L = 0.64
    def constant(params, positions, n):
        del params, positions
        return jnp.asarray(n, dtype=jnp.float64) * math.log(0.8)

    n_max = 6
    settings = SamplerSettings(chains=50, sweep=30, samples_per_chain=2000,
                               burn_in=100)
    batch = run_chains(settings, box, constant, None,
                       n_max=n_max, initial_n=3, seed=seed)
    ratios = 0.64 ** np.arange(n_max + 1)
    p_geom, counts = _sector_chi2(batch, ratios / ratios.sum())
    checks.append(("geometric sector law   ", p_geom, counts))

    # 2. phi_n = alpha^n / sqrt(n!) with alpha = sqrt(2): Poisson(alpha^2 L = 2).
    #    Sectors >= 9 are lumped (expected counts drop below ~5 out there).
    log_alpha = 0.5 * math.log(2.0)

    def poisson_amp(params, positions, n):
        del params, positions
        nf = jnp.asarray(n, dtype=jnp.float64)
        return nf * log_alpha - 0.5 * gammaln(nf + 1.0)

    n_max = 10
    settings = SamplerSettings(chains=50, sweep=60, samples_per_chain=2000,
                               burn_in=100)
    batch = run_chains(settings, box, poisson_amp, None,
                       n_max=n_max, initial_n=2, seed=seed + 1)
    weights = 2.0 ** np.arange(n_max + 1) / factorial(np.arange(n_max + 1))
    p_pois, counts = _sector_chi2(batch, weights / weights.sum(), lump_from=9)
    checks.append(("poisson sector law     ", p_pois, counts))

    # 3. three unequal sector amplitudes: P_n directly proportional to
    #    |phi_n|^2 (unit box), pinning insert/remove detailed balance
    amps = jnp.log(jnp.asarray([1.0, 2.0, 0.7]))

    def three_state(params, positions, n):
        del params, positions
        return amps[jnp.clip(n, 0, 2)]

    settings3 = SamplerSettings(chains=20, sweep=30, samples_per_chain=5000,
                                burn_in=100)
    batch = run_chains(settings3, box, three_state, None,
                       n_max=2, initial_n=1, seed=seed + 2)
    law = np.array([1.0, 4.0, 0.49])
    p_toy, counts = _sector_chi2(batch, law / law.sum())
    checks.append(("three-state toy        ", p_toy, counts))

    failed = False
    for name, p, counts in checks:
        ok = p > 0.01
        failed |= not ok
        print(f"{name} p={p:.4f}  counts={counts.astype(np.int64).tolist()}  "
              f"{'OK' if ok else 'REJECTED'}")
    print("PASS" if not failed else "FAIL")
    return 0 if not failed else 1


# --- shared output helpers ---------------------------------------------------


def _js(value):
    """JSON-safe number: non-finite floats become null."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _write_json(path, payload) -> None:
    with open(path, "w") as stream:
        json.dump(payload, stream, indent=2, sort_keys=True)
        stream.write("\n")


def _write_csv(path, header, rows) -> None:
    """Delimited output with repr-formatted floats (round-trip exact)."""
    with open(path, "w") as stream:
        stream.write(",".join(header) + "\n")
        for row in rows:
            stream.write(",".join(_field(v) for v in row) + "\n")


def _field(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


if __name__ == "__main__":
    sys.exit(main())
