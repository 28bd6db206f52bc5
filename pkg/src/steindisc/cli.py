"""Command-line interface: discrepancies, tests, SVGD, diagnostics, experiments.

Every command reads a JSON config (``--config``), is deterministic given the
config and ``--seed``, and emits JSON to stdout and/or CSV to ``--output``.
Exit codes: 0 success, 2 input error, 3 numerical failure.

Samples are headerless CSV, one point per row, d columns.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np
from scipy import integrate

from .discrepancy import (
    SampleSet,
    embeddability_diagnostics,
    ksd_quadrature_1d,
    ksd_u_stat,
    ksd_v_stat,
    mmd_v_stat,
)
from .inference import SVGDConfig, SvgdDiverged, gof_test, svgd_run
from .kernels import kernel_from_spec
from .stein import SteinKernel, bounded_stein_base, stein_from_spec
from .targets import DissipativityParams, check_dissipativity, score_growth_probe, target_from_spec
from .util import generator

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

_INPUT_ERRORS = (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError)
_NUMERIC_ERRORS = (ArithmeticError, np.linalg.LinAlgError)


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def _load_samples(path: str) -> SampleSet:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return SampleSet(rows)


def _dump_json(obj: dict, output: str | None) -> None:
    text = json.dumps(obj, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _stein_from_config(cfg: dict) -> SteinKernel:
    if "stein" in cfg:
        return stein_from_spec(cfg["stein"])
    spec = {"base": cfg["base"], "target": cfg["target"]}
    if cfg.get("tilt") is not None:
        spec["tilt"] = cfg["tilt"]
    return stein_from_spec(spec)


# ---------------------------------------------------------------------------
# commands


def cmd_ksd(cfg: dict, seed: int, output: str | None, threads: int | None) -> int:
    sk = _stein_from_config(cfg)
    q = _load_samples(cfg["samples"])
    estimator = cfg.get("estimator", "v_stat")
    if estimator == "v_stat":
        est = ksd_v_stat(sk, q, n_threads=threads)
    elif estimator == "u_stat":
        est = ksd_u_stat(sk, q, n_threads=threads)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    _dump_json(est.to_json(), output)
    return EXIT_OK


def cmd_mmd(cfg: dict, seed: int, output: str | None, threads: int | None) -> int:
    k = kernel_from_spec(cfg["kernel"])
    q = _load_samples(cfg["samples_q"])
    p = _load_samples(cfg["samples_p"])
    est = mmd_v_stat(k, q, p, n_threads=threads)
    _dump_json(est.to_json(), output)
    return EXIT_OK


def cmd_gof(cfg: dict, seed: int, output: str | None, threads: int | None) -> int:
    sk = _stein_from_config(cfg)
    q = _load_samples(cfg["samples"])
    result = gof_test(
        sk,
        q,
        alpha=float(cfg.get("alpha", 0.05)),
        n_bootstrap=int(cfg.get("n_bootstrap", 500)),
        seed=seed,
    )
    _dump_json(result.to_json(), output)
    return EXIT_OK


def cmd_svgd(cfg: dict, seed: int, output: str | None, threads: int | None) -> int:
    target = target_from_spec(cfg["target"])
    base_kernel = kernel_from_spec(cfg["base"])
    choice = cfg.get("kernel_choice", "base_kernel_on_particles")
    config = SVGDConfig(
        step_size=float(cfg["step_size"]),
        iterations=int(cfg["iterations"]),
        kernel_choice=choice,
        seed=seed,
    )
    if choice == "bounded_stein_construction":
        tilt = cfg.get("tilt", {"c": 1.0, "gamma": 1.0})
        driver = bounded_stein_base(
            base_kernel, float(tilt["c"]), float(tilt["gamma"]), target=target
        )
    else:
        driver = base_kernel

    init_cfg = cfg["initial"]
    if "file" in init_cfg:
        initial = _load_samples(init_cfg["file"])
    elif "sample" in init_cfg:
        src = target_from_spec(init_cfg["sample"]["target"])
        n = int(init_cfg["sample"]["n"])
        initial = SampleSet(src.sample(generator(seed), n))
    else:
        raise ValueError('svgd "initial" must contain "file" or "sample"')

    sk = SteinKernel(driver, target)
    trace_rows: list[list] = []

    def trace(iteration: int, pts: np.ndarray) -> None:
        ksd = ksd_v_stat(sk, SampleSet(pts)).value
        trace_rows.append(
            [iteration, float(pts.mean()), float(pts.var()), float(ksd)]
        )

    trace_path = cfg.get("trace_path")
    out = svgd_run(target, config, initial, driver, trace=trace if trace_path else None)
    if trace_path:
        _write_csv(trace_path, ["iteration", "mean", "variance", "ksd_v"], trace_rows)
    if output:
        _write_csv(
            output,
            [f"x{i}" for i in range(out.dim)],
            [[float(v) for v in row] for row in out.points],
        )
    summary = {
        "n_particles": out.n,
        "mean": [float(v) for v in out.points.mean(axis=0)],
        "variance": [float(v) for v in out.points.var(axis=0)],
        "ksd_v": ksd_v_stat(sk, out).value,
    }
    _dump_json(summary, None)
    return EXIT_OK


_DIAG_RADII = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)


def cmd_diagnose(cfg: dict, seed: int, output: str | None, threads: int | None) -> int:
    target = target_from_spec(cfg["target"])
    base = kernel_from_spec(cfg["base"])
    sk = SteinKernel(base, target)
    radii = [float(r) for r in cfg.get("radii", _DIAG_RADII)]
    growth = score_growth_probe(target, radii, seed=seed)
    report: dict = {"score_growth": growth.to_json(), "warnings": []}

    emb = embeddability_diagnostics(sk, n=int(cfg.get("n", 2000)), seed=seed)
    report["embeddability"] = emb.to_json()

    diss_cfg = cfg.get("dissipativity")
    if diss_cfg is None and target.dissipativity is not None:
        d = target.dissipativity
        diss_cfg = {"u": d.u, "r0": d.r0, "r1": d.r1, "r2": d.r2}
    if diss_cfg is not None:
        params = DissipativityParams(
            u=float(diss_cfg["u"]),
            r0=float(diss_cfg["r0"]),
            r1=float(diss_cfg["r1"]),
            r2=float(diss_cfg["r2"]),
        )
        report["dissipativity"] = check_dissipativity(target, params, radii, seed=seed).to_json()

    if base.bounded and growth.score_decaying:
        report["warnings"].append(
            "bounded base kernel with a decaying score: the discrepancy cannot "
            "control weak convergence to this target; escaping mass may go undetected"
        )
    _dump_json(report, output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiments


def _experiment_escape(cfg: dict, seed: int, output: str, threads) -> int:
    target = target_from_spec(cfg["target"])
    sk = _stein_from_config(cfg)
    n_max = int(cfg.get("n_max", 100))
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    ns = np.arange(1, n_max + 1)
    pts = np.zeros((n_max, target.dim))
    pts[:, 0] = ns
    diag = sk.diagonal(pts)
    rows = [
        [int(n), float(n), float(kp), float(math.sqrt(max(0.0, kp)))]
        for n, kp in zip(ns, diag)
    ]
    _write_csv(output, ["n", "point", "kp_diag", "ksd_delta"], rows)
    return EXIT_OK


def _atom_mixture_w1(target, atom: float) -> float:
    # W1 between (1-eps) P + eps delta_atom and P equals eps times
    # integral of F_P below the atom plus integral of (1 - F_P) above it.
    below, _ = integrate.quad(lambda t: float(target.cdf(t)), -np.inf, atom, limit=400)
    above, _ = integrate.quad(lambda t: 1.0 - float(target.cdf(t)), atom, np.inf, limit=400)
    return below + above


def _experiment_convergence(cfg: dict, seed: int, output: str, threads) -> int:
    target = target_from_spec(cfg["target"])
    if target.dim != 1:
        raise ValueError("convergence_curve requires a 1-d target")
    base = kernel_from_spec(cfg["base"])
    sk = SteinKernel(base, target)
    family = cfg["sequence_family"]
    n_grid = [int(n) for n in cfg.get("n_grid", range(1, 51))]
    if len(n_grid) == 0:
        raise ValueError("n grid must be nonempty")
    lo, hi = cfg.get("domain", (-12.0, 12.0))
    rows: list[list] = []
    if family == "shrinking_shift":
        for n in n_grid:
            shift = 1.0 / n
            q_density = lambda x, s=shift: target.density(np.asarray(x) - s)
            est = ksd_quadrature_1d(sk, lambda x: float(q_density(x)[()]), (lo, hi), tol=1e-10)
            rows.append([n, est.value, abs(shift)])
    elif family == "escaping_mixture":
        # Q_n = (1 - 1/n) P + (1/n) delta_n; expand the squared discrepancy
        # into P x P, cross, and atom terms, each evaluated by quadrature.
        dbl, _ = integrate.dblquad(
            lambda y, x: sk.scalar(x, y)
            * float(target.density(np.array([x])))
            * float(target.density(np.array([y]))),
            lo,
            hi,
            lo,
            hi,
            epsabs=1e-10,
            epsrel=1e-10,
        )
        for n in n_grid:
            eps = 1.0 / n
            atom = float(n)
            cross, _ = integrate.quad(
                lambda y: sk.scalar(atom, y) * float(target.density(np.array([y]))),
                lo,
                hi,
                epsabs=1e-12,
                epsrel=1e-10,
                limit=400,
            )
            sq = (1.0 - eps) ** 2 * dbl + 2.0 * eps * (1.0 - eps) * cross + eps**2 * sk.scalar(
                atom, atom
            )
            w1 = eps * _atom_mixture_w1(target, atom)
            rows.append([n, math.sqrt(max(0.0, sq)), w1])
    else:
        raise ValueError(f"unknown sequence_family {family!r}")
    _write_csv(output, ["n", "ksd", "wasserstein1"], rows)
    return EXIT_OK


def _experiment_boundedness(cfg: dict, seed: int, output: str, threads) -> int:
    target = target_from_spec(cfg["target"])
    sk = _stein_from_config(cfg)
    grid_max = float(cfg.get("grid_max", 50.0))
    grid_step = float(cfg.get("grid_step", 0.5))
    xs = np.arange(-grid_max, grid_max + grid_step / 2, grid_step)
    pts = np.zeros((xs.size, target.dim))
    pts[:, 0] = xs
    diag = sk.diagonal(pts)
    rows = [[float(x), float(kp)] for x, kp in zip(xs, diag)]
    _write_csv(output, ["x", "kp_diag"], rows)
    return EXIT_OK


def _experiment_dissipativity(cfg: dict, seed: int, output: str, threads) -> int:
    target = target_from_spec(cfg["target"])
    p = cfg["params"]
    params = DissipativityParams(float(p["u"]), float(p["r0"]), float(p["r1"]), float(p["r2"]))
    radii = [float(r) for r in cfg.get("radii", _DIAG_RADII)]
    directions = int(cfg.get("directions_per_radius", 64))
    report = check_dissipativity(target, params, radii, directions_per_radius=directions, seed=seed)
    rows = [[float(r), float(m)] for r, m in zip(report.radii, report.min_margin_per_radius)]
    _write_csv(output, ["radius", "min_margin"], rows)
    _dump_json(report.to_json(), None)
    return EXIT_OK


_EXPERIMENTS = {
    "escape_sequence": _experiment_escape,
    "convergence_curve": _experiment_convergence,
    "boundedness_scan": _experiment_boundedness,
    "dissipativity_report": _experiment_dissipativity,
}


def cmd_experiment(cfg: dict, seed: int, output: str | None, threads: int | None) -> int:
    name = cfg.get("experiment")
    if name not in _EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}")
    if not output:
        raise ValueError("experiments require --output for their CSV table")
    return _EXPERIMENTS[name](cfg, seed, output, threads)


_COMMANDS = {
    "ksd": cmd_ksd,
    "mmd": cmd_mmd,
    "gof": cmd_gof,
    "svgd": cmd_svgd,
    "diagnose": cmd_diagnose,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steindisc",
        description="kernel discrepancies, goodness-of-fit tests, SVGD, and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--seed", type=int, default=0, help="seed for all stochastic steps")
        p.add_argument("--output", default=None, help="output path (CSV or JSON copy)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for pair sums")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](cfg, args.seed, args.output, args.threads)
    except SvgdDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
