"""Command-line surface: `gprg solve|spectrum|rates --config <path> ...`.

Exit codes: 0 on any stop-rule termination, 1 on configuration/validation
errors, 2 on solver errors.  All file writes are whole-file atomic
(write-temp-then-rename) and byte-deterministic for a fixed config and seed
(the wall-clock column in history CSVs is the one exception).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .config import RunConfig, parse_config
from .errors import ConfigurationError, GridMismatchError
from .grids import (Field, export_field_csv, inner_l2, load_field, save_field)
from .operators import build_operators, energy, lambda_tilde, residual_inf
from .precond import PreconditionerSpec, assemble
from .riemannian import StepPolicy
from .solver import (ConvergenceRecord, StageSpec, export_history, fit_tail_rate,
                     initial_guess, perturb_state, run)
from .spectral import (compute_spectrum_report, hessian_tangent_eigs,
                       pencil_extremes, theoretical_rate)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


def _atomic_write(path, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gprg-tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_file(path, writer) -> None:
    """Atomic variant for writers that need a real path (binary formats)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gprg-tmp-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _out_dir(cfg: RunConfig, override: str | None) -> str:
    base = override if override is not None else cfg.outputs.directory
    path = os.path.join(base, cfg.name)
    os.makedirs(path, exist_ok=True)
    return path


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


def cmd_solve(cfg: RunConfig, out_override: str | None,
              seed_override: int | None) -> int:
    grid = cfg.build_grid()
    params = cfg.build_params()
    ops = build_operators(grid, params)
    if not cfg.stages:
        raise ConfigurationError("config has no [[stages]]")
    seed = cfg.initial.seed if seed_override is None else seed_override
    start = initial_guess(cfg.initial.kind, grid, params, m=cfg.initial.m,
                          seed=seed, amplitude=cfg.initial.amplitude)
    out = _out_dir(cfg, out_override)
    try:
        final, records = run(cfg.build_stages(), ops, start)
    except Exception as exc:
        print(f"gprg solve: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if cfg.outputs.emit_csv:
        for i, rec in enumerate(records, start=1):
            _atomic_write_file(os.path.join(out, f"history_stage{i}.csv"),
                               lambda p, r=rec: export_history(r, p))
    if cfg.outputs.emit_field:
        _atomic_write_file(os.path.join(out, "final.gpfld"),
                           lambda p: save_field(p, final))
        _atomic_write_file(os.path.join(out, "final.csv"),
                           lambda p: export_field_csv(p, final))
    summary = {
        "E_g": energy(ops, final),
        "lambda_g": lambda_tilde(ops, final),
        "residual": residual_inf(ops, final),
        "iterations": [len(rec.rows) - 1 for rec in records],
        "statuses": [rec.status for rec in records],
    }
    _atomic_write(os.path.join(out, "summary.json"), _json_dump(summary))
    print(f"gprg solve: {cfg.name}: lambda_g = {summary['lambda_g']:.10f}, "
          f"E_g = {summary['E_g']:.10f}, residual = {summary['residual']:.3e}")
    return EXIT_OK


def _load_reference(cfg: RunConfig, field_path: str) -> Field:
    grid = cfg.build_grid()
    return load_field(field_path, grid=grid)


def cmd_spectrum(cfg: RunConfig, field_path: str,
                 out_override: str | None) -> int:
    state = _load_reference(cfg, field_path)
    ops = build_operators(state.grid, cfg.build_params())
    out = _out_dir(cfg, out_override)
    k = cfg.spectrum.k
    tangent = hessian_tangent_eigs(ops, state, k, seed=cfg.initial.seed)
    reports = {}
    sigma_list = list(cfg.spectrum.sigma0) or [1e-3]
    for kind in cfg.spectrum.preconditioners:
        sigmas = sigma_list if kind == "P4" else [sigma_list[0]]
        for s0 in sigmas:
            spec = PreconditionerSpec(kind, sigma0=s0)
            rep = compute_spectrum_report(ops, state, spec, k,
                                          tangent_pairs=tangent,
                                          seed=cfg.initial.seed)
            label = kind if kind != "P4" or len(sigmas) == 1 \
                else f"{kind}@{s0:g}"
            reports[label] = rep.to_flat_dict()
            print(f"gprg spectrum: {label}: mu = {rep.mu:.8g}, L = {rep.L:.8g}, "
                  f"tau* = {rep.tau_star:.8g}, rho = {rep.rho:.8g}")
    _atomic_write(os.path.join(out, "spectrum.json"), _json_dump(reports))
    return EXIT_OK


def cmd_rates(cfg: RunConfig, field_path: str, out_override: str | None,
              seed_override: int | None) -> int:
    state = _load_reference(cfg, field_path)
    ops = build_operators(state.grid, cfg.build_params())
    out = _out_dir(cfg, out_override)
    seed = cfg.initial.seed if seed_override is None else seed_override
    e_ref = energy(ops, state)
    sigma0 = (list(cfg.spectrum.sigma0) or [1e-3])[0]
    rows = []
    failures = 0
    for kind in cfg.spectrum.preconditioners:
        spec = PreconditionerSpec(kind, sigma0=sigma0)
        try:
            handle = assemble(spec, ops, state)
            pencil = pencil_extremes(ops, state, handle, seed=seed)
            tau_star, rho_theory = theoretical_rate(pencil.mu, pencil.L, kind)
            start = perturb_state(ops, state, seed,
                                  h1_size=cfg.rates.perturbation_h1)
            stage = StageSpec(precond=spec, policy=StepPolicy.fixed(tau_star),
                              max_iters=cfg.rates.max_iters,
                              stop_energy_value=e_ref + cfg.rates.target_error)
            _, records = run([stage], ops, start)
            rec = records[0]
            rho_fit, n_pts = fit_tail_rate(rec.rows, e_ref)
            rows.append((kind, pencil.mu, pencil.L, tau_star, rho_theory,
                         rho_fit, len(rec.rows) - 1, "ok"))
            print(f"gprg rates: {kind}: rho_theory = {rho_theory:.6f}, "
                  f"rho_fitted = {rho_fit:.6f} ({n_pts} fit points)")
        except Exception as exc:
            failures += 1
            rows.append((kind, float("nan"), float("nan"), float("nan"),
                         float("nan"), float("nan"), 0,
                         f"{type(exc).__name__}: {exc}"))
            print(f"gprg rates: {kind}: failed: {exc}", file=sys.stderr)
    lines = ["precond,mu,L,tau_star,rho_theory,rho_fitted,iters,status"]
    for r in rows:
        lines.append(f"{r[0]},{r[1]:.17g},{r[2]:.17g},{r[3]:.17g},"
                     f"{r[4]:.17g},{r[5]:.17g},{r[6]},\"{r[7]}\"")
    _atomic_write(os.path.join(out, "rates.csv"), "\n".join(lines) + "\n")
    if failures and failures == len(rows):
        return EXIT_SOLVER
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gprg",
        description="Preconditioned Riemannian gradient ground-state solver "
                    "for the rotating Gross-Pitaevskii energy functional")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_field in (("solve", False), ("spectrum", True),
                              ("rates", True)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured random seed")
        if needs_field:
            p.add_argument("--field", required=True,
                           help="reference field snapshot (.gpfld)")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except (ConfigurationError, OSError) as exc:
        print(f"gprg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "solve":
            return cmd_solve(cfg, args.out, args.seed)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, args.field, args.out)
        if args.command == "rates":
            return cmd_rates(cfg, args.field, args.out, args.seed)
    except (ConfigurationError, GridMismatchError, OSError) as exc:
        print(f"gprg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"gprg: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
