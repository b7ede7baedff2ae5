"""Config-driven experiment runner.

Verbs:

- synth:   build a problem bundle (operators, phantom, clean/noisy data)
- solve:   run configured solvers on a bundle, one report per solver
- compare: run >= 2 solvers across noise pairs, emit a comparison table
- rates:   source-condition rate study on synthetic diagonal problems

Configs are JSON documents carrying a schema_version; noise magnitudes accept
percent shorthand ("0.1%") and are stored internally as fractions.  All
randomness derives from one seed through labelled child streams, so a
(config, seed) pair reproduces its outputs byte-for-byte (wall-time fields
aside).  Exit code 0 on success; failures print a machine-readable JSON error
to stderr (category "config" exits 2, category "runtime" exits 1).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from nnireg import _kernels, biosensor, io
from nnireg.errors import ConfigError, NniregError
from nnireg.operators import (
    DenseOperator,
    PRECONDITIONER_CATALOG,
    Preconditioner,
    make_preconditioner,
    operator_distance,
    spectral_norm,
)
from nnireg.seeding import GENERATOR_NAME, child_rng, child_seed_sequence
from nnireg.solvers import (
    InverseProblem,
    OutputMap,
    RelaxationSchedule,
    SolveReport,
    SolverConfig,
    run_solver,
)
from nnireg.stopping import APriori, MaxOnly, ModifiedDiscrepancy, Morozov, StoppingRule
from nnireg import analysis

SCHEMA_VERSION = 1

COMPARE_HEADER = "method,noise_h,noise_delta,l2err,k_star,cpu_seconds"
SOLVE_HEADER = "name,method,k_star,stop_reason,l2err,residual,preconditioned_residual,cpu_seconds"
RATES_HEADER = "p,delta,k_star,error"
SLOPES_HEADER = "p,slope,target"


def parse_fraction(value) -> float:
    """Accept 0.01 or percent shorthand like "1%"; returns a fraction."""
    if isinstance(value, str):
        s = value.strip()
        if s.endswith("%"):
            return float(s[:-1]) / 100.0
        return float(s)
    return float(value)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return io.format_float(value)
    return str(value)


def load_config(path) -> dict:
    cfg = io.read_json(path)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})"
        )
    if int(cfg.get("repetitions", 1)) < 1:
        raise ConfigError("repetitions must be >= 1")
    base = Path(path).parent
    problem = cfg.get("problem", {})
    if problem.get("kind") == "biosensor" and "model_file" in problem:
        model_path = (base / problem["model_file"]).resolve()
        if not model_path.exists():
            raise ConfigError(f"referenced model file does not exist: {model_path}")
        problem["model_file"] = str(model_path)
    return cfg


# --------------------------------------------------------------------------
# bundle synthesis


def _resolve_phantom(spec, grid) -> biosensor.RateConstantMap:
    spec = spec or {"kind": "example1"}
    kind = spec.get("kind", "example1")
    if kind in biosensor.EXAMPLE_DOMAINS:
        return biosensor.phantom(kind, grid)
    if kind == "gaussians":
        return biosensor.gaussian_mixture_phantom(
            grid, [tuple(c) for c in spec["components"]]
        )
    raise ConfigError(f"unknown phantom kind {kind!r}")


def _load_problem_model(cfg: dict) -> dict:
    problem = cfg.get("problem") or {}
    if problem.get("kind") != "biosensor":
        raise ConfigError("synth/solve/compare need a biosensor problem")
    if "model_file" in problem:
        return io.read_model(problem["model_file"])
    try:
        doc = problem["model"]
        model = biosensor.KineticsModel(
            omega=biosensor.Rect(*doc["omega"]),
            theta=biosensor.Rect(*doc["theta"]),
            t0=float(doc["t0"]),
            dt=float(doc["dt"]),
            t_inj=float(doc["t_inj"]),
        )
        noise = cfg.get("noise", {})
        return {
            "model": model,
            "grid_omega": biosensor.Grid2D(model.omega, *map(int, doc["grid_omega"])),
            "grid_theta": biosensor.Grid2D(model.theta, *map(int, doc["grid_theta"])),
            "seed": int(noise.get("seed", 0)),
            "h_prime": parse_fraction(noise.get("h_prime", 0.0)),
            "delta_prime": parse_fraction(noise.get("delta_prime", 0.0)),
            "phantom": doc.get("phantom"),
        }
    except KeyError as exc:
        raise ConfigError(f"problem.model is missing key {exc}") from exc


def cmd_synth(cfg: dict, out_dir: Path, seed: int | None = None) -> dict:
    """Materialize a bundle: operators (exact and timing-perturbed), phantom,
    clean and noisy sensorgrams, realized noise levels."""
    spec = _load_problem_model(cfg)
    noise = cfg.get("noise", {})
    seed = int(seed if seed is not None else noise.get("seed", spec["seed"]))
    h_prime = parse_fraction(noise.get("h_prime", spec["h_prime"]))
    delta_prime = parse_fraction(noise.get("delta_prime", spec["delta_prime"]))

    model, grid_omega, grid_theta = spec["model"], spec["grid_omega"], spec["grid_theta"]
    model = biosensor.normalize(model, grid_omega, grid_theta)
    op = biosensor.assemble_operator(model, grid_omega, grid_theta)
    xdag = _resolve_phantom(spec.get("phantom"), grid_omega)
    clean = biosensor.synth_sensorgram(op, xdag, grid_theta)

    dt_h = biosensor.perturb_timing(model, h_prime, seed)
    op_noisy = biosensor.assemble_operator(model, grid_omega, grid_theta, dt_value=dt_h)
    h = operator_distance(op, op_noisy)
    noisy, delta = biosensor.perturb_data(clean, delta_prime, seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "operator_exact.npy", op.entries)
    np.save(out_dir / "operator_noisy.npy", op_noisy.entries)
    io.write_field_csv(out_dir / "phantom.csv", grid_omega, xdag.values)
    io.write_field_csv(out_dir / "sensorgram_clean.csv", grid_theta, clean.values)
    io.write_field_csv(out_dir / "sensorgram_noisy.csv", grid_theta, noisy.values)
    io.write_model(
        out_dir / "model.json", model, grid_omega, grid_theta,
        seed, h_prime, delta_prime, phantom=spec.get("phantom"),
    )
    meta = {
        "schema_version": SCHEMA_VERSION,
        "h": h,
        "delta": delta,
        "dt": model.dt,
        "dt_h": dt_h,
        "normalization": model.normalization,
        "seed": seed,
        "h_prime": h_prime,
        "delta_prime": delta_prime,
        "rng": GENERATOR_NAME,
    }
    io.write_json(out_dir / "meta.json", meta)
    return meta


def load_bundle(bundle_dir) -> dict:
    bundle_dir = Path(bundle_dir)
    if not bundle_dir.exists():
        raise ConfigError(f"bundle directory does not exist: {bundle_dir}")
    meta = io.read_json(bundle_dir / "meta.json")
    spec = io.read_model(bundle_dir / "model.json")
    op = DenseOperator(np.load(bundle_dir / "operator_exact.npy"))
    op_noisy = DenseOperator(np.load(bundle_dir / "operator_noisy.npy"))
    _, phantom_values = io.read_field_csv(bundle_dir / "phantom.csv")
    _, clean = io.read_field_csv(bundle_dir / "sensorgram_clean.csv")
    _, noisy = io.read_field_csv(bundle_dir / "sensorgram_noisy.csv")
    problem = InverseProblem(
        operator_noisy=op_noisy,
        data_noisy=noisy,
        h=float(meta["h"]),
        delta=float(meta["delta"]),
        operator_exact=op,
        data_exact=clean,
    )
    return {
        "dir": bundle_dir,
        "meta": meta,
        "spec": spec,
        "problem": problem,
        "phantom": phantom_values,
    }


# --------------------------------------------------------------------------
# solver/stopping construction


def _build_preconditioner(entry, n: int, lambda_max: float, seed: int):
    spec = entry.get("preconditioner")
    if spec is None:
        return None
    if isinstance(spec, str):
        if spec.upper() not in PRECONDITIONER_CATALOG:
            raise ConfigError(f"unknown preconditioner catalog id {spec!r}")
        return make_preconditioner(spec, n, lambda_max, seed)
    kind = spec.get("kind")
    if kind == "scalar":
        if "mu" in spec:
            return Preconditioner.scalar(float(spec["mu"]), n)
        return Preconditioner.scalar(float(spec["factor"]) * lambda_max, n)
    if kind == "diagonal":
        return Preconditioner.diag(np.asarray(spec["diagonal"], dtype=float))
    if kind == "spd":
        return Preconditioner.spd(np.asarray(spec["matrix"], dtype=float))
    raise ConfigError(f"unknown preconditioner spec {spec!r}")


def _build_stopping(entry, phantom_values) -> StoppingRule:
    spec = entry.get("stopping") or {"kind": "max_only", "n_max": 100_000}
    kind = spec.get("kind")
    n_max = int(spec.get("n_max", 100_000))
    if kind == "max_only":
        return StoppingRule(MaxOnly(), n_max)
    if kind == "morozov":
        return StoppingRule(Morozov(tau0=float(spec.get("tau0", 1.1))), n_max)
    if kind == "modified":
        cdag = spec.get("c_dagger", "auto")
        if cdag == "auto":
            if phantom_values is None:
                raise ConfigError('c_dagger "auto" needs a bundle with a phantom')
            cdag = 1.1 * float(np.linalg.norm(phantom_values))
        tau = spec.get("tau")
        tau0 = spec.get("tau0")
        if tau is None and tau0 is None:
            tau0 = 1.1
        return StoppingRule(
            ModifiedDiscrepancy(
                c_dagger=float(cdag),
                tau=None if tau is None else float(tau),
                tau0=None if tau0 is None else float(tau0),
            ),
            n_max,
        )
    if kind == "apriori":
        return StoppingRule(
            APriori(
                rule=spec.get("rule", "admissible"),
                scale=float(spec.get("scale", 1.0)),
                p=None if spec.get("p") is None else float(spec["p"]),
                a=None if spec.get("a") is None else float(spec["a"]),
            ),
            n_max,
        )
    raise ConfigError(f"unknown stopping kind {kind!r}")


def _build_solver(entry, n: int, lambda_max: float, seed: int) -> SolverConfig:
    method = entry.get("method")
    omap = entry.get("output_map")
    schedule = entry.get("schedule") or {}
    try:
        return SolverConfig(
            method=method,
            preconditioner=_build_preconditioner(entry, n, lambda_max, seed),
            omega=float(entry.get("omega", 1.0)),
            schedule=RelaxationSchedule(
                kind=schedule.get("kind", "harmonic"), q=int(schedule.get("q", 1))
            ),
            output_map=None
            if omap is None
            else OutputMap(kind=omap.get("kind", "abs"), a=float(omap.get("a", 0.0))),
            x0=None if entry.get("x0") is None else np.asarray(entry["x0"], dtype=float),
            max_iterations=int(entry.get("max_iterations", 1_000_000)),
        )
    except NniregError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver entry {entry.get('name', method)!r}: {exc}") from exc


def _solver_entries(cfg: dict) -> list[dict]:
    entries = cfg.get("solvers")
    if not entries:
        raise ConfigError("config has no solver entries")
    named = []
    for i, entry in enumerate(entries):
        entry = dict(entry)
        entry.setdefault("name", f"{entry.get('method', 'solver')}_{i}")
        named.append(entry)
    return named


# --------------------------------------------------------------------------
# solve


def _run_entry(entry, bundle, cfg, traces: bool) -> tuple[dict, SolveReport]:
    problem: InverseProblem = bundle["problem"]
    lambda_max = spectral_norm(problem.operator_noisy)
    seed = int(bundle["meta"]["seed"])
    solver_cfg = _build_solver(entry, problem.n, lambda_max, seed)
    rule = _build_stopping(entry, bundle["phantom"])
    report = run_solver(
        solver_cfg, problem, rule, xdag=bundle["phantom"], record_traces=traces
    )
    echo = dict(report.config_echo)
    echo["experiment"] = {
        "schema_version": SCHEMA_VERSION,
        "bundle": str(bundle["dir"]),
        "bundle_meta": bundle["meta"],
        "solver_entry": entry,
        "lambda_max": lambda_max,
    }
    doc = {
        "name": entry["name"],
        "method": report.method,
        "k_star": report.k_star,
        "stop_reason": report.stop_reason,
        "l2err": report.l2err,
        "residual": report.residual,
        "preconditioned_residual": report.preconditioned_residual,
        "wall_time": report.wall_time,
        "config_echo": echo,
    }
    return doc, report


def cmd_solve(cfg: dict, bundle_dir, out_dir: Path, traces=False, parallel=1) -> list[dict]:
    bundle = load_bundle(bundle_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = _solver_entries(cfg)
    repetitions = int(cfg.get("repetitions", 1))

    jobs = [(e, rep) for e in entries for rep in range(repetitions)]

    def run_job(job):
        entry, rep = job
        return entry, rep, _run_entry(entry, bundle, cfg, traces)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(j) for j in jobs]

    rows = [SOLVE_HEADER]
    docs = []
    for entry, rep, (doc, report) in results:
        suffix = f"_rep{rep}" if repetitions > 1 else ""
        io.write_json(out_dir / f"report_{entry['name']}{suffix}.json", doc)
        if traces:
            _write_traces(out_dir / f"trace_{entry['name']}{suffix}.csv", report)
        rows.append(
            ",".join(
                [
                    entry["name"],
                    doc["method"],
                    str(doc["k_star"]),
                    doc["stop_reason"],
                    _fmt(doc["l2err"]),
                    _fmt(doc["residual"]),
                    _fmt(doc["preconditioned_residual"]),
                    _fmt(doc["wall_time"]),
                ]
            )
        )
        docs.append(doc)
    (out_dir / "solve_reports.csv").write_text("\n".join(rows) + "\n")
    return docs


def _write_traces(path, report: SolveReport) -> None:
    hist = report.histories
    names = [n for n in ("functional", "residual", "err_z", "l2err") if n in hist]
    if not names:
        return
    length = len(hist[names[0]])
    rows = ["k," + ",".join(names)]
    for k in range(length):
        rows.append(str(k) + "," + ",".join(_fmt(float(hist[n][k])) for n in names))
    Path(path).write_text("\n".join(rows) + "\n")


# --------------------------------------------------------------------------
# compare


def _parse_noise_pairs(cfg: dict) -> list[tuple[float, float]]:
    pairs = cfg.get("noise_pairs")
    if not pairs:
        raise ConfigError("compare needs a noise_pairs list")
    out = []
    for p in pairs:
        if isinstance(p, (list, tuple)):
            out.append((parse_fraction(p[0]), parse_fraction(p[1])))
        else:
            f = parse_fraction(p)
            out.append((f, f))
    return out


def cmd_compare(cfg: dict, bundle_dir, out_dir: Path, parallel=1) -> list[dict]:
    """Methods x noise pairs table from one bundle's clean problem.

    Each pair re-perturbs the bundle's exact operator/data with its own child
    seed stream derived from the bundle seed, then every solver entry runs
    under its configured stopping rule.
    """
    bundle = load_bundle(bundle_dir)
    entries = _solver_entries(cfg)
    if len(entries) < 2:
        raise ConfigError("compare needs at least 2 solver entries")
    pairs = _parse_noise_pairs(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)

    spec = bundle["spec"]
    grid_omega, grid_theta = spec["grid_omega"], spec["grid_theta"]
    # the model file describes the raw kernel; the bundle's normalization is
    # part of meta.json
    model = replace(spec["model"], normalization=float(bundle["meta"]["normalization"]))
    op = bundle["problem"].operator_exact
    clean = biosensor.Sensorgram(grid_theta, bundle["problem"].data_exact)
    seed = int(bundle["meta"]["seed"])

    cells = []
    for i, (hp, dp) in enumerate(pairs):
        pair_seed = int(child_seed_sequence(seed, "compare", str(i)).generate_state(1)[0])
        dt_h = biosensor.perturb_timing(model, hp, pair_seed)
        op_noisy = biosensor.assemble_operator(model, grid_omega, grid_theta, dt_value=dt_h)
        h = operator_distance(op, op_noisy)
        noisy, delta = biosensor.perturb_data(clean, dp, pair_seed)
        problem = InverseProblem(
            operator_noisy=op_noisy,
            data_noisy=noisy.values,
            h=h,
            delta=delta,
            operator_exact=op,
            data_exact=clean.values,
        )
        pair_bundle = dict(bundle, problem=problem)
        for entry in entries:
            cells.append((entry, i, hp, dp, h, delta, pair_bundle))

    def run_cell(cell):
        entry, i, hp, dp, h, delta, pair_bundle = cell
        doc, report = _run_entry(entry, pair_bundle, cfg, traces=False)
        return entry, i, h, delta, doc

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]

    rows = [COMPARE_HEADER]
    docs = []
    for entry, i, h, delta, doc in results:
        rows.append(
            ",".join(
                [
                    entry["name"],
                    _fmt(h),
                    _fmt(delta),
                    _fmt(doc["l2err"]),
                    str(doc["k_star"]),
                    _fmt(doc["wall_time"]),
                ]
            )
        )
        doc["noise_pair_index"] = i
        doc["noise_h"] = h
        doc["noise_delta"] = delta
        docs.append(doc)
    (out_dir / "compare.csv").write_text("\n".join(rows) + "\n")
    _write_aligned_table(out_dir / "compare.txt", rows)
    io.write_json(out_dir / "compare_reports.json", docs)
    return docs


def _write_aligned_table(path, csv_rows: list[str]) -> None:
    table = [r.split(",") for r in csv_rows]
    widths = [max(len(row[c]) for row in table) for c in range(len(table[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# rates


def cmd_rates(cfg: dict, out_dir: Path) -> dict:
    """Power-source rate study on a synthetic diagonal problem.

    For each source exponent p and each data-noise level delta, runs the
    preconditioned scheme to the a-priori index scale * delta^(-1/(p+1)) and
    records the reconstruction error, averaged over `repetitions` independent
    noise draws; fits the log-log slope per p.
    """
    problem = cfg.get("problem") or {}
    if problem.get("kind") != "synthetic":
        raise ConfigError("rates needs a synthetic problem")
    n = int(problem.get("n", 32))
    spectrum = problem.get("spectrum", {"kind": "power", "exponent": 2.0})
    if spectrum.get("kind") != "power":
        raise ConfigError("only power spectra are supported")
    exponent = float(spectrum.get("exponent", 2.0))
    mu = float(cfg.get("mu", 16.0))
    scale = float(cfg.get("scale", 1.0))
    x0_value = float(cfg.get("x0_value", 2.0))
    p_list = [float(p) for p in cfg.get("p_list", [0.5, 1.0, 2.0])]
    deltas = [float(d) for d in cfg.get("deltas", [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])]
    deltas = [d for d in deltas if d > 0]  # zero noise has no finite a-priori index
    if len(deltas) < 3:
        raise ConfigError("need at least 3 positive noise levels")
    seed = int(cfg.get("noise", {}).get("seed", 0))
    repetitions = int(cfg.get("repetitions", 1))

    lam = np.arange(1, n + 1, dtype=float) ** (-exponent)
    op = DenseOperator(np.diag(np.sqrt(lam)))
    dec = analysis.eigendecompose(op)
    source_kind = (cfg.get("source") or {}).get("kind", "log_uniform")
    if source_kind == "log_uniform":
        # energy ~ j^{-1} across the spectrum compensates the eigenvalue
        # density, so the filter bias scales like k^{-p} uniformly in p
        profile = np.arange(1, n + 1, dtype=float) ** (-0.5)
    elif source_kind == "random":
        profile = child_rng(seed, "rates-source").standard_normal(n)
    else:
        raise ConfigError(f"unknown source kind {source_kind!r}")
    profile /= np.linalg.norm(profile)
    v = dec.eigenvectors @ profile
    x0 = np.full(n, x0_value)

    rows = [RATES_HEADER]
    slope_rows = [SLOPES_HEADER]
    fits = {}
    for p in p_list:
        spec = analysis.SourceSpec(kind="holder", exponent=p, v=v)
        xdag, valid = analysis.build_source_problem(dec, spec, x0)
        if not valid:
            raise ConfigError(
                f"source element for p={p} leaves the non-negative cone; rescale x0_value"
            )
        y = op.entries @ xdag
        errors = []
        for delta in deltas:
            solver = SolverConfig(
                method="algorithm1",
                preconditioner=Preconditioner.scalar(mu, n),
                x0=x0,
                max_iterations=10_000_000,
            )
            rule = StoppingRule(APriori("holder", scale=scale, p=p), n_max=10_000_000)
            rep_errors = []
            k_star = None
            for rep in range(repetitions):
                e = child_rng(
                    seed, "rates-noise", f"p{p}", f"d{delta}", f"r{rep}"
                ).standard_normal(n)
                e *= delta / np.linalg.norm(e)
                prob = InverseProblem(
                    operator_noisy=op, data_noisy=y + e, h=0.0, delta=delta,
                    operator_exact=op, data_exact=y,
                )
                report = run_solver(solver, prob, rule, xdag=xdag)
                k_star = report.k_star
                rep_errors.append(float(np.linalg.norm(report.x - xdag)))
            err = float(np.mean(rep_errors))
            errors.append(err)
            rows.append(f"{_fmt(p)},{_fmt(delta)},{k_star},{_fmt(err)}")
        slope = analysis.rate_fit(deltas, errors)
        fits[p] = slope
        slope_rows.append(f"{_fmt(p)},{_fmt(slope)},{_fmt(p / (p + 1.0))}")

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "rates.csv").write_text("\n".join(rows) + "\n")
    (out_dir / "slopes.csv").write_text("\n".join(slope_rows) + "\n")
    io.write_json(
        out_dir / "rates_meta.json",
        {
            "schema_version": SCHEMA_VERSION,
            "n": n,
            "mu": mu,
            "scale": scale,
            "p_list": p_list,
            "deltas": deltas,
            "slopes": {str(p): s for p, s in fits.items()},
            "rng": GENERATOR_NAME,
            "kernel_backend": _kernels.KERNEL_BACKEND,
        },
    )
    return fits


# --------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnireg",
        description="Non-negativity preserving iterative regularization experiments",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("synth", "solve", "compare", "rates"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--traces", action="store_true", help="write per-iteration traces")
        sp.add_argument("--parallel", type=int, default=1, help="worker threads for independent cells")
        if verb in ("solve", "compare"):
            sp.add_argument("--bundle", required=True, help="problem bundle directory (from synth)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.setdefault("noise", {})["seed"] = args.seed
        out = Path(args.out)
        started = time.perf_counter()
        if args.verb == "synth":
            meta = cmd_synth(cfg, out, seed=args.seed)
            print(f"bundle written to {out} (h={meta['h']:.3e}, delta={meta['delta']:.3e})")
        elif args.verb == "solve":
            docs = cmd_solve(cfg, args.bundle, out, traces=args.traces, parallel=args.parallel)
            for d in docs:
                print(
                    f"{d['name']}: k*={d['k_star']} reason={d['stop_reason']} "
                    f"l2err={d['l2err']}"
                )
        elif args.verb == "compare":
            cmd_compare(cfg, args.bundle, out, parallel=args.parallel)
            print((out / "compare.txt").read_text(), end="")
        elif args.verb == "rates":
            fits = cmd_rates(cfg, out)
            for p, slope in fits.items():
                print(f"p={p}: fitted slope {slope:.3f} (target {p / (p + 1):.3f})")
        print(f"done in {time.perf_counter() - started:.2f}s -> {out}")
        return 0
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except NniregError as exc:
        print(json.dumps({"error": "runtime", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
