"""Config-driven batch commands.

Every command reads one YAML config, runs a library computation, and
writes CSV outputs plus a manifest (config hash, seed, versions) into
the output directory.  Same config and seed give byte-identical CSVs;
only the manifest timestamp differs between runs.

Exit codes: 0 success, 2 invalid config, 3 budget exceeded,
4 acceptance-check failure (a validation command found a violation).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from math import log
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import AffdimError, BudgetExceeded, ConfigInvalid, DomainError
from .linalg import AffineIFS
from .measures import (
    BernoulliMeasure,
    ExampleOneMeasure,
    MarkovMeasure,
    ScaleGrid,
    UniformSftMeasure,
    cylinder_exponent_trace,
    essential_exponent_bounds,
    example_one_system,
    log_kernel_potential,
    potential_dim_trace,
)
from .pressure import SftSpec, affinity_dim, exceptional_bound, norm_ratio_exponent
from .capacity import capacity_dims
from .projection import (
    covering_check,
    local_dims_at,
    project_cloud,
    required_depth,
    sample_translation,
    sweep_experiment,
)
from .orthproj import exact_dim_criterion

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_CHECK = 4

CSV_SCHEMA_VERSION = 1
LOG3 = log(3.0)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _get(cfg, path, typ=None, required=True, default=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigInvalid(path, "missing required field")
            return default
        node = node[part]
    if typ is not None and not isinstance(node, typ):
        raise ConfigInvalid(path, f"expected {typ}, got {type(node).__name__}")
    return node


def _positive(cfg, path, typ=(int, float), required=True, default=None):
    val = _get(cfg, path, required=required, default=default)
    if val is None:
        return None
    if not isinstance(val, typ if isinstance(typ, tuple) else (typ,)):
        raise ConfigInvalid(path, f"expected a number, got {type(val).__name__}")
    if val <= 0:
        raise ConfigInvalid(path, f"must be positive, got {val}")
    return val


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid("(file)", f"cannot read {path}: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid("(file)", f"not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalid("(file)", "top level must be a mapping")
    cfg["_raw_text"] = text
    return cfg


def build_ifs(cfg):
    kind = _get(cfg, "measure.kind", str, required=False, default=None)
    if _get(cfg, "set.kind", str, required=False, default=None) == "example1" or kind == "example1":
        d = int(_positive(cfg, "ifs.d", int, required=False, default=2))
        k = int(_positive(cfg, "measure.k", int, required=False, default=1) or 1)
        ifs, _ = example_one_system(d=d, k=k)
        return ifs
    d = int(_positive(cfg, "ifs.d", int))
    m = int(_positive(cfg, "ifs.m", int))
    rows = _get(cfg, "ifs.matrices", list)
    if len(rows) != m:
        raise ConfigInvalid("ifs.matrices", f"expected {m} matrices, got {len(rows)}")
    mats = []
    for i, row in enumerate(rows):
        flat = np.asarray(row, dtype=float).ravel()
        if flat.size != d * d:
            raise ConfigInvalid(
                f"ifs.matrices[{i}]", f"expected {d * d} row-major entries, got {flat.size}"
            )
        mats.append(flat.reshape(d, d))
    trans_cfg = _get(cfg, "ifs.translations", required=False, default=None)
    if trans_cfg is None or trans_cfg == "random":
        translations = np.zeros((m, d))
    else:
        translations = np.asarray(trans_cfg, dtype=float)
        if translations.shape != (m, d):
            raise ConfigInvalid(
                "ifs.translations", f"expected shape ({m}, {d}), got {translations.shape}"
            )
    try:
        return AffineIFS(np.array(mats), translations)
    except AffdimError as exc:
        raise ConfigInvalid("ifs", str(exc)) from exc


def build_measure(cfg, ifs):
    kind = _get(cfg, "measure.kind", str)
    if kind == "bernoulli":
        probs = np.asarray(_get(cfg, "measure.probs", list), dtype=float)
        if probs.size != ifs.m:
            raise ConfigInvalid("measure.probs", f"expected {ifs.m} entries")
        return BernoulliMeasure(probs)
    if kind == "markov":
        P = np.asarray(_get(cfg, "measure.transition", list), dtype=float)
        init = np.asarray(_get(cfg, "measure.initial", list), dtype=float)
        return MarkovMeasure(P, init)
    if kind == "sft_uniform":
        A = np.asarray(_get(cfg, "measure.adjacency", list))
        return UniformSftMeasure(A)
    if kind == "example1":
        d = int(_positive(cfg, "ifs.d", int, required=False, default=2))
        k = int(_positive(cfg, "measure.k", int, required=False, default=1))
        return ExampleOneMeasure(d=d, k=k)
    raise ConfigInvalid("measure.kind", f"unknown kind '{kind}'")


def build_sft(cfg):
    kind = _get(cfg, "set.kind", str, required=False, default="full")
    if kind in ("full", "example1"):
        return None
    if kind == "sft":
        return SftSpec(np.asarray(_get(cfg, "set.adjacency", list)))
    raise ConfigInvalid("set.kind", f"unknown kind '{kind}'")


def build_grid(cfg):
    gamma = float(_positive(cfg, "grid.gamma", (int, float), required=False, default=0.5))
    n_min = int(_get(cfg, "grid.n_min", int, required=False, default=1))
    n_max = int(_get(cfg, "grid.n_max", int, required=False, default=12))
    try:
        return ScaleGrid(gamma=gamma, n_min=n_min, n_max=n_max)
    except AffdimError as exc:
        raise ConfigInvalid("grid", str(exc)) from exc


def run_params(cfg, args):
    seed = args.seed if args.seed is not None else _get(cfg, "run.seed", int, required=False, default=0)
    tol = args.tol if args.tol is not None else float(
        _positive(cfg, "run.tol", (int, float), required=False, default=1e-6)
    )
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("AFFDIM_THREADS", "0")) or int(
            _get(cfg, "run.threads", int, required=False, default=1)
        )
    return int(seed), float(tol), max(1, int(threads))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_manifest(out_dir, command, cfg, seed, extra=None):
    manifest = {
        "schema_version": CSV_SCHEMA_VERSION,
        "command": command,
        "config_sha256": hashlib.sha256(cfg["_raw_text"].encode()).hexdigest(),
        "seed": seed,
        "versions": {
            "affdim": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_affinity(cfg, args, out):
    seed, tol, _ = run_params(cfg, args)
    ifs = build_ifs(cfg)
    sft = build_sft(cfg)
    res = affinity_dim(ifs, sft=sft, tol=tol)
    write_csv(
        out / "affinity.csv",
        ["level", "upper_root", "lower_root"],
        [(n, u, l) for n, u, l in res.levels],
    )
    write_csv(
        out / "affinity_summary.csv",
        ["estimate", "bracket_lo", "bracket_hi"],
        [(res.estimate, res.bracket[0], res.bracket[1])],
    )
    write_manifest(out, "affinity", cfg, seed)
    return EXIT_OK


def cmd_sdim(cfg, args, out):
    seed, _, _ = run_params(cfg, args)
    ifs = build_ifs(cfg)
    mu = build_measure(cfg, ifs)
    n_paths = int(_positive(cfg, "run.n_paths", int, required=False, default=8))
    n_max = int(_positive(cfg, "run.n_max", int, required=False, default=200))
    rng = np.random.default_rng(seed)
    paths = mu.sample_paths(n_paths, n_max, rng)
    rows = []
    for i in range(n_paths):
        lo, hi, trace = cylinder_exponent_trace(mu, ifs, paths[i], n_max)
        for n, s in enumerate(trace, start=1):
            rows.append((i, n, s))
    write_csv(out / "sdim.csv", ["path", "n", "exponent"], rows)
    bounds = essential_exponent_bounds(mu, ifs, n_paths, n_max, np.random.default_rng(seed))
    write_csv(
        out / "sdim_summary.csv",
        ["under_S", "over_S", "under_D", "over_D", "S_q01", "S_q99", "D_q01", "D_q99"],
        [
            (
                bounds.under_S,
                bounds.over_S,
                bounds.under_D,
                bounds.over_D,
                *bounds.quantiles_S,
                *bounds.quantiles_D,
            )
        ],
    )
    write_manifest(out, "sdim", cfg, seed)
    return EXIT_OK


def cmd_gpot(cfg, args, out):
    seed, _, _ = run_params(cfg, args)
    ifs = build_ifs(cfg)
    mu = build_measure(cfg, ifs)
    grid = build_grid(cfg)
    n_paths = int(_positive(cfg, "run.n_paths", int, required=False, default=4))
    rng = np.random.default_rng(seed)
    depth = grid.depth_required(ifs)
    paths = mu.sample_paths(n_paths, depth, rng)
    rows = []
    summary = []
    for i in range(n_paths):
        rep = potential_dim_trace(mu, ifs, paths[i], grid)
        for n, r, lv, sl in zip(rep.exponents, rep.radii, rep.log_values, rep.slopes):
            rows.append((i, int(n), r, lv, sl))
        summary.append((i, rep.liminf_estimate, rep.limsup_estimate))
    write_csv(out / "gpot.csv", ["path", "n", "r", "log_potential", "slope"], rows)
    write_csv(out / "gpot_summary.csv", ["path", "liminf_estimate", "limsup_estimate"], summary)
    write_manifest(out, "gpot", cfg, seed)
    return EXIT_OK


def cmd_capacity(cfg, args, out):
    seed, tol, _ = run_params(cfg, args)
    ifs = build_ifs(cfg)
    sft = build_sft(cfg)
    grid = build_grid(cfg)
    node_cap = int(_positive(cfg, "run.node_cap", int, required=False, default=2_000_000))
    rep = capacity_dims(ifs, grid, sft=sft, tol=min(tol, 1e-8), node_cap=node_cap)
    rows = [
        (r, int(ell), c, s)
        for r, ell, c, s in zip(rep.radii, rep.depths, rep.capacities, rep.slopes)
    ]
    write_csv(out / "capacity.csv", ["r", "depth", "capacity", "slope"], rows)
    write_csv(
        out / "capacity_summary.csv",
        ["lower_estimate", "upper_estimate", "n_skipped"],
        [(rep.lower_estimate, rep.upper_estimate, len(rep.skipped))],
    )
    write_manifest(out, "capacity", cfg, seed)
    return EXIT_OK


def _sweep_common(cfg, args, with_locals):
    seed, tol, threads = run_params(cfg, args)
    ifs = build_ifs(cfg)
    mu = build_measure(cfg, ifs)
    grid = build_grid(cfg)
    n_translations = int(_positive(cfg, "run.n_translations", int, required=False, default=5))
    rho = float(_positive(cfg, "run.rho", (int, float), required=False, default=1.0))
    n_points = int(_positive(cfg, "run.n_points", int, required=False, default=100_000))
    tolerance = float(_positive(cfg, "run.tolerance", (int, float), required=False, default=0.15))
    pass_fraction = float(
        _positive(cfg, "run.pass_fraction", (int, float), required=False, default=0.8)
    )
    theory_box = _get(cfg, "run.theory_box", (int, float), required=False, default=None)
    theory_local = _get(cfg, "run.theory_local", (int, float), required=False, default=None)
    centers = int(_get(cfg, "run.centers", int, required=False, default=0)) if with_locals else 0
    res = sweep_experiment(
        ifs,
        mu,
        grid,
        n_translations=n_translations,
        rho=rho,
        n_points=n_points,
        seed=seed,
        theory_box=theory_box,
        theory_local=theory_local,
        tolerance=tolerance,
        pass_fraction=pass_fraction,
        centers_per_a=centers,
        threads=threads,
    )
    return seed, res


def cmd_boxdim(cfg, args, out):
    seed, res = _sweep_common(cfg, args, with_locals=False)
    write_csv(out / "boxdim.csv", ["a_index", "r", "count", "slope"], res.rows)
    summary = [
        (i, rep.slope, rep.lower, rep.upper, rep.theory_target, rep.residual)
        for i, rep in enumerate(res.box_reports)
    ]
    write_csv(
        out / "boxdim_summary.csv",
        ["a_index", "slope", "lower", "upper", "theory", "residual"],
        [(i, s, lo, hi, t if t is not None else "", r if r is not None else "")
         for i, s, lo, hi, t, r in summary],
    )
    write_manifest(out, "boxdim", cfg, seed)
    if res.box_ok is False:
        return EXIT_CHECK
    return EXIT_OK


def cmd_localdim(cfg, args, out):
    seed, _, _ = run_params(cfg, args)
    ifs = build_ifs(cfg)
    mu = build_measure(cfg, ifs)
    grid = build_grid(cfg)
    n_translations = int(_positive(cfg, "run.n_translations", int, required=False, default=5))
    rho = float(_positive(cfg, "run.rho", (int, float), required=False, default=1.0))
    n_points = int(_positive(cfg, "run.n_points", int, required=False, default=100_000))
    centers = int(_positive(cfg, "run.centers", int, required=False, default=25))
    seeds = np.random.SeedSequence(seed).spawn(n_translations)
    r_min = float(grid.radii.min())
    rows, summary = [], []
    for i in range(n_translations):
        rng = np.random.default_rng(seeds[i])
        a = sample_translation(rho, ifs.d, ifs.m, rng)
        depth = required_depth(ifs, a, r_min)
        cloud = project_cloud(ifs, a, mu, n_points, depth, rng, min_radius=r_min)
        sel = rng.integers(0, cloud.n, size=centers)
        ests = local_dims_at(cloud, cloud.points[sel], grid)
        for j, e in enumerate(ests):
            rows.append((i, j, e.fit, e.lower, e.upper))
        summary.append((i, float(np.median([e.fit for e in ests]))))
    write_csv(out / "localdim.csv", ["a_index", "center", "fit", "lower", "upper"], rows)
    write_csv(out / "localdim_summary.csv", ["a_index", "median_fit"], summary)
    write_manifest(out, "localdim", cfg, seed)
    return EXIT_OK


def cmd_covering(cfg, args, out):
    seed, tol, _ = run_params(cfg, args)
    ifs = build_ifs(cfg)
    sft = build_sft(cfg)
    grid = build_grid(cfg)
    n_translations = int(_positive(cfg, "run.n_translations", int, required=False, default=5))
    rho = float(_positive(cfg, "run.rho", (int, float), required=False, default=1.0))
    node_cap = int(_positive(cfg, "run.node_cap", int, required=False, default=2_000_000))
    seeds = np.random.SeedSequence(seed).spawn(n_translations)
    rows = []
    all_pass = True
    for i in range(n_translations):
        rng = np.random.default_rng(seeds[i])
        a = sample_translation(rho, ifs.d, ifs.m, rng)
        for r in grid.radii:
            if not 0 < r < ifs.alpha_plus:
                continue
            cert = covering_check(
                ifs, a, float(r), sft=sft, node_cap=node_cap, tol=min(tol, 1e-9)
            )
            rows.append((i, cert.r, cert.n_r, cert.capacity, cert.bound, cert.passed))
            all_pass = all_pass and cert.passed
    write_csv(
        out / "covering.csv",
        ["a_index", "r", "n_r", "capacity", "bound", "passed"],
        rows,
    )
    write_manifest(out, "covering", cfg, seed, extra={"all_passed": all_pass})
    return EXIT_OK if all_pass else EXIT_CHECK


def cmd_sweep(cfg, args, out):
    seed, res = _sweep_common(cfg, args, with_locals=True)
    write_csv(out / "sweep.csv", ["a_index", "r", "count", "slope"], res.rows)
    rows = []
    for i, rep in enumerate(res.box_reports):
        med = res.local_summaries[i] if res.local_summaries else None
        rows.append(
            (
                i,
                rep.slope,
                rep.lower,
                rep.upper,
                med if med is not None else "",
                res.box_pass[i] if res.box_pass else "",
                res.local_pass[i] if res.local_pass else "",
            )
        )
    write_csv(
        out / "sweep_summary.csv",
        ["a_index", "slope", "lower", "upper", "local_median", "box_pass", "local_pass"],
        rows,
    )
    verdict = res.exact_dim_verdict or {}
    write_csv(
        out / "sweep_verdict.csv",
        ["key", "value"],
        sorted({**verdict, "occupancy_fraction": res.occupancy_fraction}.items()),
    )
    write_manifest(out, "sweep", cfg, seed)
    failed = res.box_ok is False or res.local_ok is False
    return EXIT_CHECK if failed else EXIT_OK


def cmd_example1(cfg, args, out):
    seed, _, _ = run_params(cfg, args)
    d = int(_positive(cfg, "ifs.d", int, required=False, default=2))
    k = int(_positive(cfg, "measure.k", int, required=False, default=1))
    n_max = int(_positive(cfg, "run.n_max", int, required=False, default=600))
    ifs, mu = example_one_system(d=d, k=k)
    blocks = []
    M = 8
    while M <= n_max:
        blocks.append((M + 1, (5 * M) // 4))
        M *= 8
    in_block = lambda n: any(lo <= n <= hi for lo, hi in blocks)
    rows = []
    ok = True
    for n in range(1, n_max + 1):
        s = mu.exponent_exact(n)
        expected = None if in_block(n) else k
        match = True if expected is None else (s == expected)
        ok = ok and match
        rows.append((n, float(s), "" if expected is None else expected, match))
    write_csv(out / "example1_sn.csv", ["n", "exponent", "expected", "match"], rows)
    spikes = []
    M = 8
    while (9 * M) // 8 <= n_max:
        n = (9 * M) // 8
        s = mu.exponent_exact(n)
        good = s * 18 == 19 * k
        ok = ok and good
        spikes.append((n, float(s), float(19 * k / 18), good))
        M *= 8
    write_csv(out / "example1_spikes.csv", ["n", "exponent", "expected", "match"], spikes)
    grows = []
    rng = np.random.default_rng(seed)
    word = mu.sample_paths(1, 2 * n_max, rng)[0]
    N = 16
    while N <= n_max:
        lg = log_kernel_potential(mu, ifs, word, 3.0 ** (-N))
        lower = -(k * N + 1) * LOG3
        good = lg >= lower - 1e-12
        ok = ok and good
        grows.append((N, lg, lower, good))
        N *= 2
    write_csv(out / "example1_potential.csv", ["N", "log_G", "log_lower_bound", "match"], grows)
    write_manifest(out, "example1", cfg, seed, extra={"all_passed": ok})
    return EXIT_OK if ok else EXIT_CHECK


def cmd_orth(cfg, args, out):
    seed, _, _ = run_params(cfg, args)
    ifs = build_ifs(cfg)
    mu = build_measure(cfg, ifs)
    grid = build_grid(cfg)
    m_sub = int(_positive(cfg, "run.orth_m", int, required=False, default=1))
    n_points = int(_positive(cfg, "run.n_points", int, required=False, default=100_000))
    centers = int(_positive(cfg, "run.centers", int, required=False, default=40))
    rng = np.random.default_rng(seed)
    depth = required_depth(ifs, ifs.translations, float(grid.radii.min()))
    cloud = project_cloud(ifs, ifs.translations, mu, n_points, depth, rng)
    verdict = exact_dim_criterion(cloud, m_sub, grid, rng, n_centers=centers)
    write_csv(
        out / "orth.csv",
        ["center", "lower_dim", "kernel_slope"],
        [(i, l, s) for i, (l, s) in enumerate(zip(verdict.lower_dims, verdict.kernel_slopes))],
    )
    write_csv(
        out / "orth_summary.csv",
        ["m", "condition_i", "condition_ii", "exact_dimensional", "s_estimate",
         "fraction_i", "fraction_ii"],
        [
            (
                verdict.m,
                verdict.condition_i,
                verdict.condition_ii,
                verdict.exact_dimensional,
                verdict.s_estimate,
                verdict.fraction_i,
                verdict.fraction_ii,
            )
        ],
    )
    write_manifest(out, "orth", cfg, seed)
    return EXIT_OK


def cmd_exbound(cfg, args, out):
    seed, _, _ = run_params(cfg, args)
    delta = float(_positive(cfg, "run.delta", (int, float)))
    dim_m_e = float(_get(cfg, "run.dim_m_e", (int, float)))
    tau_cfg = _get(cfg, "run.tau", (int, float), required=False, default=None)
    d = int(_positive(cfg, "ifs.d", int))
    m = int(_positive(cfg, "ifs.m", int))
    if tau_cfg is None:
        ifs = build_ifs(cfg)
        tau = norm_ratio_exponent(ifs)
    else:
        tau = float(tau_cfg)
    bound = exceptional_bound(d, m, delta, dim_m_e, tau)
    write_csv(
        out / "exbound.csv",
        ["d", "m", "delta", "dim_m_e", "tau", "generic_bound", "refined_bound"],
        [(d, m, delta, dim_m_e, tau, bound.generic, bound.refined)],
    )
    write_manifest(out, "exbound", cfg, seed)
    return EXIT_OK


COMMANDS = {
    "affinity": cmd_affinity,
    "sdim": cmd_sdim,
    "gpot": cmd_gpot,
    "capacity": cmd_capacity,
    "boxdim": cmd_boxdim,
    "localdim": cmd_localdim,
    "covering": cmd_covering,
    "sweep": cmd_sweep,
    "example1": cmd_example1,
    "orth": cmd_orth,
    "exbound": cmd_exbound,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="affdim",
        description="Batch computations on self-affine iterated function systems",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: AFFDIM_THREADS or run.threads)")
    parser.add_argument("--out", default="affdim_out", help="output directory")
    parser.add_argument("--tol", type=float, default=None, help="override run.tol")
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, args, out)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if code != EXIT_OK:
        print("acceptance check failed; see outputs", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
