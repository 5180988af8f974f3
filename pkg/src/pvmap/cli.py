"""Command-line pipelines: dictionaries, phantoms, solves, comparisons and maps.

Every subcommand writes into an output directory and leaves two JSON files
there: ``manifest.json`` (flags, input digests, seed, solver settings and
library version, byte-for-byte reproducible) and ``runtime.json`` (wall time
and peak resident memory, which naturally vary between runs).

Exit codes: 0 success, 1 usage error, 2 input/output or format error, 3 a
solver stopped at its iteration cap (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import resource
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arrayio import ArrayFormatError, read_array, write_array
from .dictionary import (DEFAULT_RANK_TOL, AcquisitionSchedule, AxisSpec, Kernel, Spacing,
                         build_dictionary, build_grid, load_dictionary, save_dictionary)
from .metrics import dfcs
from .phantom import (RNG_ALGORITHM, MeasuredStack, PhantomSpec, generate_phantom,
                      integrate_components, save_maps)
from .solvers import (Problem, SolverConfig, Termination, solve_admm, solve_ladmm,
                      solve_nnls_voxelwise, tune_beta)
from .spatial import build_spatial_graph
from .standard import PRESETS

__all__ = ["main", "run"]

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MAX_ITERS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Run:
    """Tracks inputs read and writes the manifest pair at the end of a subcommand."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.inputs: dict[str, str] = {}
        self.extra: dict = {}
        self.start = time.perf_counter()
        self.out = Path(args.out)

    def input(self, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise InputError(f"input file not found: {path}")
        self.inputs[str(path)] = _sha256(path)
        sidecar = path.with_name(path.name + ".json")
        if sidecar.is_file():
            self.inputs[str(sidecar)] = _sha256(sidecar)
        return path

    def read(self, path) -> np.ndarray:
        path = self.input(path)
        try:
            return read_array(path)
        except (ArrayFormatError, OSError) as exc:
            raise InputError(f"{path}: {exc}") from exc

    def finish(self) -> None:
        flags = {k: v for k, v in sorted(vars(self.args).items()) if k != "handler"}
        manifest = {
            "subcommand": self.args.command,
            "argv": self.argv,
            "flags": flags,
            "inputs": dict(sorted(self.inputs.items())),
            "seed": flags.get("seed"),
            "rng": RNG_ALGORITHM,
            "version": __version__,
            **self.extra,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True,
                                                           default=str) + "\n")
        runtime = {"wall_seconds": time.perf_counter() - self.start,
                   "peak_rss_kib": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss}
        (self.out / "runtime.json").write_text(json.dumps(runtime, indent=1) + "\n")


def _load_problem(run: _Run, args, exact: bool | None = None) -> Problem:
    dictionary_path = run.input(args.dict)
    try:
        dictionary = load_dictionary(dictionary_path)
    except (ArrayFormatError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{dictionary_path}: {exc}") from exc
    data = run.read(args.data)
    mask = run.read(args.mask)
    try:
        graph = build_spatial_graph(mask != 0)
        stack = MeasuredStack(data)
        return Problem.build(stack, dictionary, graph, args.lam, args.rank_tol,
                             exact=args.exact_k if exact is None else exact)
    except ValueError as exc:
        raise InputError(f"inconsistent inputs: {exc}") from exc


def _config(args) -> SolverConfig:
    return SolverConfig(beta=args.beta, xi_p=args.xi_p, max_iters=args.max_iters,
                        rel_change_tol=args.tol, split_residual_tol=args.split_tol,
                        trace_every=args.trace_every, threads=args.threads)


def _config_record(config: SolverConfig, result=None) -> dict:
    rec = {k: getattr(config, k) for k in config.__dataclass_fields__}
    if result is not None:
        rec.update(beta=result.beta, xi_p=None if math.isnan(result.xi_p) else result.xi_p,
                   rank=result.rank)
    return rec


# --- subcommands -------------------------------------------------------------

def _parse_axis(text: str) -> AxisSpec:
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise UsageError(f"axis {text!r} is not MIN:MAX:COUNT[:linear|logarithmic]")
    try:
        return AxisSpec(float(parts[0]), float(parts[1]), int(parts[2]),
                        Spacing(parts[3]) if len(parts) == 4 else Spacing.LINEAR)
    except ValueError as exc:
        raise UsageError(f"axis {text!r}: {exc}") from exc


def cmd_make_dict(args, run: _Run) -> int:
    if args.preset:
        dictionary = PRESETS[args.preset]().dictionary
    else:
        if not (args.kernel and args.schedule and args.axis):
            raise UsageError("make-dict needs --preset or all of --kernel, --schedule, --axis")
        path = run.input(args.schedule)
        try:
            theta = read_array(path) if path.suffix == ".sspm" else np.loadtxt(path, ndmin=2)
        except (ArrayFormatError, OSError, ValueError) as exc:
            raise InputError(f"{path}: {exc}") from exc
        try:
            schedule = AcquisitionSchedule(theta, Kernel(args.kernel))
            grid = build_grid([_parse_axis(a) for a in args.axis])
            dictionary = build_dictionary(schedule, grid)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    run.out.mkdir(parents=True, exist_ok=True)
    save_dictionary(run.out / "dictionary.sspm", dictionary)
    run.extra["dictionary_shape"] = list(dictionary.shape)
    return EXIT_OK


def cmd_phantom(args, run: _Run) -> int:
    if args.preset:
        preset = PRESETS[args.preset]()
        dictionary, mask, spec = preset.dictionary, preset.mask, preset.spec
    else:
        if not (args.dict and args.spec and args.mask):
            raise UsageError("phantom needs --preset or all of --dict, --spec, --mask")
        dictionary = load_dictionary(run.input(args.dict))
        mask = run.read(args.mask) != 0
        try:
            spec = PhantomSpec.from_dict(json.loads(run.input(args.spec).read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"{args.spec}: {exc}") from exc
    spec = PhantomSpec(spec.image_shape, spec.compartments,
                       spec.noise_sigma if args.noise is None else args.noise,
                       spec.seed if args.seed is None else args.seed)
    graph = build_spatial_graph(mask)
    f_true, data = generate_phantom(spec, dictionary, graph)
    run.out.mkdir(parents=True, exist_ok=True)
    if args.preset:
        save_dictionary(run.out / "dictionary.sspm", dictionary)
    write_array(run.out / "mask.sspm", mask.astype(float))
    write_array(run.out / "f_true.sspm", f_true.values)
    write_array(run.out / "data.sspm", data.values)
    (run.out / "phantom.json").write_text(json.dumps({"kind": "phantom", **spec.to_dict()},
                                                     indent=1) + "\n")
    run.args.seed = spec.seed
    run.extra["phantom"] = spec.to_dict()
    return EXIT_OK


def cmd_solve(args, run: _Run) -> int:
    problem = _load_problem(run, args)
    run.out.mkdir(parents=True, exist_ok=True)
    if args.algorithm == "nnls":
        image = solve_nnls_voxelwise(problem.dictionary, problem.data, args.tikhonov)
        write_array(run.out / "f.sspm", image.values)
        run.extra["solver"] = {"algorithm": "nnls", "tikhonov": args.tikhonov}
        return EXIT_OK
    config = _config(args)
    solver = solve_ladmm if args.algorithm == "ladmm" else solve_admm
    result = solver(problem, config)
    write_array(run.out / "f.sspm", result.estimate)
    result.write_trace(run.out / "trace.csv")
    run.extra["solver"] = {"algorithm": args.algorithm, "config": _config_record(config, result),
                           "exact_k": problem.exact}
    run.extra["result"] = {"iterations": result.iterations,
                           "termination": result.termination.value,
                           "state_vector_count": result.state_vector_count}
    return EXIT_MAX_ITERS if result.termination is Termination.MAX_ITERS else EXIT_OK


def cmd_compare(args, run: _Run) -> int:
    exact = _load_problem(run, args, exact=True)
    working = exact if args.exact_k else Problem.build(exact.data, exact.dictionary, exact.graph,
                                                       exact.lam, args.rank_tol)
    config = _config(args)
    run.out.mkdir(parents=True, exist_ok=True)
    if args.reference:
        f_star = run.read(args.reference)
        ref_info = {"path": args.reference}
    else:
        ref_config = config.with_(max_iters=args.ref_iters, rel_change_tol=args.ref_tol,
                                  split_residual_tol=args.ref_tol,
                                  trace_every=args.ref_iters)
        ref = solve_ladmm(exact, ref_config)
        f_star = ref.estimate
        ref_info = {"iterations": ref.iterations, "termination": ref.termination.value,
                    "config": _config_record(ref_config, ref)}
    write_array(run.out / "fstar.sspm", f_star)
    results = {}
    for name, solver in (("ladmm", solve_ladmm), ("admm", solve_admm)):
        results[name] = solver(working, config, reference=f_star)
        write_array(run.out / f"f_{name}.sspm", results[name].estimate)
    with open(run.out / "dfcs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "iteration", "wall_seconds", "cost", "split_residual",
                    "dual_residual", "dfcs"])
        for name, res in results.items():
            for rec in res.trace:
                w.writerow([name, rec.iteration] + [repr(float(v)) for v in (
                    rec.wall_seconds, rec.cost, rec.split_residual, rec.dual_residual, rec.dfcs)])
    c_l, c_a = results["ladmm"].final_cost, results["admm"].final_cost
    summary = {
        name: {"final_cost": res.final_cost, "iterations": res.iterations,
               "termination": res.termination.value, "wall_seconds": res.wall_seconds,
               "final_dfcs": dfcs(res.estimate, f_star),
               "seconds_to_dfcs_threshold": next(
                   (rec.wall_seconds for rec in res.trace if rec.dfcs <= args.dfcs_threshold),
                   None),
               "state_vector_count": res.state_vector_count}
        for name, res in results.items()
    }
    summary["relative_cost_difference"] = abs(c_l - c_a) / max(abs(c_l), abs(c_a), 1e-300)
    summary["dfcs_threshold"] = args.dfcs_threshold
    summary["reference"] = ref_info
    (run.out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    run.extra["solver"] = {"config": _config_record(config), "exact_k": working.exact,
                           "reference": ref_info}
    capped = any(r.termination is Termination.MAX_ITERS for r in results.values())
    return EXIT_MAX_ITERS if capped else EXIT_OK


def _parse_region(text: str):
    try:
        if ":" in text:
            start, stop = text.split(":")
            return (int(start), int(stop))
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"region {text!r} is not START:STOP or I,J,K") from exc


def cmd_maps(args, run: _Run) -> int:
    f = run.read(args.image)
    mask = run.read(args.mask)
    graph = build_spatial_graph(mask != 0)
    if f.ndim != 2 or f.shape[1] != graph.n_voxels:
        raise InputError(f"{args.image}: expected Q x {graph.n_voxels}, got {f.shape}")
    regions = [_parse_region(r) for r in args.region]
    try:
        maps = integrate_components(f, regions)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_maps(run.out, maps, graph, args.prefix)
    run.extra["regions"] = [list(r) for r in regions]
    return EXIT_OK


def cmd_tune_beta(args, run: _Run) -> int:
    problem = _load_problem(run, args)
    try:
        candidates = [float(c) for c in args.candidates.split(",")]
        origin = [int(v) for v in args.patch_origin.split(",")]
        shape = [int(v) for v in args.patch_shape.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    config = _config(args)
    try:
        beta = tune_beta(problem, origin, shape, candidates, args.probe_iters, config)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / "beta.json").write_text(json.dumps({"beta": beta}) + "\n")
    print(repr(beta))
    run.extra["beta"] = beta
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dict", required=True, help="dictionary array (with .json sidecar)")
    p.add_argument("--data", required=True, help="P x N measurement array")
    p.add_argument("--mask", required=True, help="mask array; nonzero entries are voxels")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=None, help="default: sigma_1^2 / 10")
    p.add_argument("--xi-p", dest="xi_p", type=float, default=None,
                   help="default: 0.75 * lambda * ||D^T D|| + 1e-10")
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL)
    p.add_argument("--exact-k", action="store_true", help="disable dictionary truncation")
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--tol", type=float, default=1e-7, help="relative-change tolerance")
    p.add_argument("--split-tol", type=float, default=1e-6, help="split-residual tolerance")
    p.add_argument("--trace-every", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvmap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-dict", help="build and store a dictionary")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--kernel", choices=[k.value for k in Kernel])
    p.add_argument("--schedule", help="P x arity array (.sspm) or whitespace text table")
    p.add_argument("--axis", action="append", help="MIN:MAX:COUNT[:SPACING], one per axis")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_make_dict)

    p = sub.add_parser("phantom", help="generate a synthetic image and its measurements")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--dict")
    p.add_argument("--mask")
    p.add_argument("--spec", help="phantom specification JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=None, help="override the noise sigma")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_phantom)

    p = sub.add_parser("solve", help="estimate the spectroscopic image")
    p.add_argument("--algorithm", choices=["ladmm", "admm", "nnls"], default="ladmm")
    p.add_argument("--tikhonov", type=float, default=0.0, help="NNLS ridge weight")
    _solver_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("compare", help="LADMM vs ADMM distance-to-solution traces")
    _solver_flags(p)
    p.add_argument("--reference", help="stored converged image; skips the reference run")
    p.add_argument("--ref-iters", type=int, default=50000)
    p.add_argument("--ref-tol", type=float, default=1e-10)
    p.add_argument("--dfcs-threshold", type=float, default=0.05)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("maps", help="integrate spectral regions into component maps")
    p.add_argument("--image", required=True, help="Q x N estimate")
    p.add_argument("--mask", required=True)
    p.add_argument("--region", action="append", required=True,
                   help="START:STOP (half-open) or comma-separated indices")
    p.add_argument("--prefix", default="map")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_maps)

    p = sub.add_parser("tune-beta", help="pick beta on a small patch")
    _solver_flags(p)
    p.add_argument("--patch-origin", required=True, help="comma-separated lattice coordinates")
    p.add_argument("--patch-shape", default="3,3")
    p.add_argument("--candidates", default=",".join(repr(10.0 ** k) for k in range(-3, 4)))
    p.add_argument("--probe-iters", type=int, default=200)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=cmd_tune_beta)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    run = _Run(args, argv)
    try:
        code = args.handler(args, run)
    except UsageError as exc:
        print(f"pvmap {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, ArrayFormatError, OSError) as exc:
        print(f"pvmap {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"pvmap {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run.finish()
    if code == EXIT_MAX_ITERS:
        print(f"pvmap {args.command}: stopped at the iteration cap", file=sys.stderr)
    return code


run = main

if __name__ == "__main__":
    sys.exit(main())
