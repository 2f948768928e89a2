"""Command-line interface: corpus generation, solving, trace collection,
training, and the benchmark harness.

Exit codes: 0 success, 2 usage error, 3 runtime/solver error. All randomness
derives from --seed (default: the MICRORICCI_SEED environment variable, then
0). Every artifact embeds the resolved configuration and library version;
non-deterministic timing lives under a separate "timing" key.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .corpus import make_x0
from .distortion import DistortionSpec, apply_distortion
from .energy import convexity_probe, gradient_check, hessian_check
from .errors import MicroRicciError
from .laplacian import build_cotan_laplacian
from .mesh import gen_icosphere, load_obj, save_obj
from .metrics import compute_quality, corpus_stats
from .mesh import edge_lengths
from .microml import (
    ConstantRegressor, OracleSelector, RegressorHyper, SelectorHyper,
    collect_traces, load_dataset, load_model, save_dataset, save_model,
    solve_microricci, train_regressor, train_selector,
)
from .reporting import (
    LIBRARY_VERSION, run_payload, write_corpus_table, write_json,
    write_trace_csv,
)
from .solver import SolveConfig, max_safe_step, solve_greedy


def _default_seed():
    env = os.environ.get("MICRORICCI_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            pass
    return 0


def _runtime_error(message, detail=None):
    """Structured error JSON on stderr, exit 3."""
    err = {"error": {"message": str(message)}}
    if detail:
        err["error"]["detail"] = detail
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return 3


def _parse_eps(parser, text):
    if text == "safe":
        return "safe", None
    if text.startswith("fixed:"):
        try:
            v = float(text.split(":", 1)[1])
        except ValueError:
            parser.error(f"--eps fixed:<v> needs a number, got {text!r}")
        if v <= 0:
            parser.error("--eps fixed:<v> needs v > 0")
        return "fixed", v
    parser.error(f"--eps must be 'safe' or 'fixed:<v>', got {text!r}")


def _parse_h_policy(parser, text):
    if text == "frozen":
        return "frozen", 0
    if text.startswith("refresh:"):
        try:
            k = int(text.split(":", 1)[1])
        except ValueError:
            parser.error(f"--h-policy refresh:<k> needs an integer, got {text!r}")
        if k < 1:
            parser.error("--h-policy refresh:<k> needs k >= 1")
        return "refresh", k
    parser.error(f"--h-policy must be 'frozen' or 'refresh:<k>', got {text!r}")


def _parse_x0(parser, text):
    if text == "zeros":
        return "zeros", 0.0
    if text.startswith("random:"):
        try:
            m = float(text.split(":", 1)[1])
        except ValueError:
            parser.error(f"--x0 random:<mag> needs a number, got {text!r}")
        if m < 0:
            parser.error("--x0 random:<mag> needs mag >= 0")
        return "random", m
    parser.error(f"--x0 must be 'zeros' or 'random:<mag>', got {text!r}")


def _config_echo(args, skip=("func", "config")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _positive_float(text):
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="microricci",
        description="Greedy syndrome-decoding Ricci flow with tiny learned "
                    "vertex selection and step sizing.",
    )
    parser.add_argument("--config", help="JSON file of flag defaults "
                                         "(command line wins)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an OBJ corpus + manifest")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--subdiv", type=int, default=2)
    g.add_argument("--count", type=int, default=5)
    g.add_argument("--radius", type=_positive_float, default=1.0)
    g.add_argument("--noise", type=float, default=None,
                   help="gaussian noise sigma as bbox-diagonal fraction")
    g.add_argument("--quantize-bits", type=int, default=None)
    g.add_argument("--decimate-fraction", type=float, default=None)
    g.add_argument("--x0-mag", type=float, default=0.15,
                   help="sup norm of the per-mesh initial log-radii")
    g.add_argument("--seed", type=int, default=_default_seed())
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one solve and write the report")
    s.add_argument("--mesh", required=True)
    s.add_argument("--mode", choices=["greedy", "microricci"], default="greedy")
    s.add_argument("--residual", choices=["syndrome", "curvature"],
                   default="syndrome")
    s.add_argument("--eps", default="safe", help="'safe' or 'fixed:<v>'")
    s.add_argument("--tau", type=_positive_float, default=1e-4)
    s.add_argument("--max-steps", type=int, default=1_000_000)
    s.add_argument("--h-policy", default="frozen", help="'frozen' or 'refresh:<k>'")
    s.add_argument("--x0", default="random:0.15", help="'zeros' or 'random:<mag>'")
    s.add_argument("--x0-seed", type=int, default=None,
                   help="defaults to --seed")
    s.add_argument("--model-selector", default=None)
    s.add_argument("--model-regressor", default=None)
    s.add_argument("--out", default=None, help="report JSON path "
                                               "(default: stdout summary only)")
    s.add_argument("--trace-csv", default=None)
    s.add_argument("--energy-every", type=int, default=0)
    s.add_argument("--clamp-angles", action="store_true")
    s.add_argument("--verify", action="store_true",
                   help="emit gradient/Hessian/convexity verification")
    s.add_argument("--seed", type=int, default=_default_seed())
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("collect", help="record greedy traces as training data")
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--tau", type=_positive_float, default=1e-4)
    c.add_argument("--max-steps", type=int, default=200_000)
    c.add_argument("--stride", type=int, default=25)
    c.add_argument("--negatives", type=int, default=8)
    c.add_argument("--seed", type=int, default=_default_seed())
    c.set_defaults(func=cmd_collect)

    t = sub.add_parser("train", help="train selector + regressor from a dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out-selector", required=True)
    t.add_argument("--out-regressor", required=True)
    t.add_argument("--selector-lr", type=float, default=0.05)
    t.add_argument("--selector-epochs", type=int, default=16)
    t.add_argument("--selector-batch", type=int, default=64)
    t.add_argument("--margin", type=float, default=1.0)
    t.add_argument("--regressor-lr", type=float, default=0.02)
    t.add_argument("--regressor-epochs", type=int, default=60)
    t.add_argument("--regressor-batch", type=int, default=256)
    t.add_argument("--seed", type=int, default=_default_seed())
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="run the four ablation configurations")
    b.add_argument("--manifest", required=True)
    b.add_argument("--model-selector", required=True)
    b.add_argument("--model-regressor", required=True)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--tau", type=_positive_float, default=1e-4)
    b.add_argument("--max-steps", type=int, default=1_000_000)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--seed", type=int, default=_default_seed())
    b.set_defaults(func=cmd_bench)

    return parser


def _apply_config_file(parser, args, argv):
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read --config {args.config}: {exc}")
    if not isinstance(cfg, dict):
        parser.error("--config must contain a JSON object")
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        flag = "--" + key.replace("_", "-")
        if not hasattr(args, dest):
            parser.error(f"--config key {key!r} is not a recognized option")
        if flag not in given:
            setattr(args, dest, value)
    return args


# -- subcommands -----------------------------------------------------------------


def cmd_gen(args):
    if not 0 <= args.subdiv <= 7:
        raise UsageError(f"--subdiv must be in [0, 7], got {args.subdiv}")
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    os.makedirs(args.out_dir, exist_ok=True)
    entries = []
    for k in range(args.count):
        mesh = gen_icosphere(args.subdiv, args.radius)
        applied = []
        if args.noise is not None:
            spec = DistortionSpec("gaussian_noise", args.noise,
                                  seed=args.seed * 1000 + k)
            mesh = apply_distortion(mesh, spec)
            applied.append(spec.to_dict())
        if args.quantize_bits is not None:
            spec = DistortionSpec("quantize_position", args.quantize_bits,
                                  seed=args.seed * 1000 + k)
            mesh = apply_distortion(mesh, spec)
            applied.append(spec.to_dict())
        if args.decimate_fraction is not None:
            spec = DistortionSpec("decimate", args.decimate_fraction,
                                  seed=args.seed * 1000 + k)
            mesh = apply_distortion(mesh, spec)
            applied.append(spec.to_dict())
        name = f"mesh_{k:03d}.obj"
        save_obj(mesh, os.path.join(args.out_dir, name))
        entries.append({
            "file": name,
            "n_vertices": mesh.n_vertices,
            "n_faces": mesh.n_faces,
            "distortions": applied,
            "x0_seed": args.seed * 10000 + k,
            "x0_magnitude": args.x0_mag,
        })
    manifest = {
        "kind": "corpus_manifest",
        "library_version": LIBRARY_VERSION,
        "config": _config_echo(args),
        "entries": entries,
    }
    with open(os.path.join(args.out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(entries)} meshes + manifest to {args.out_dir}")
    return 0


class UsageError(Exception):
    pass


def _load_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    corpus = []
    for e in manifest["entries"]:
        mesh = load_obj(os.path.join(base, e["file"]))
        x0 = make_x0(mesh, e["x0_magnitude"], e["x0_seed"])
        corpus.append((mesh, x0))
    return manifest, corpus


def cmd_solve(args):
    parser_stub = argparse.ArgumentParser()
    parser_stub.error = lambda msg: (_ for _ in ()).throw(UsageError(msg))
    eps_mode, eps_value = _parse_eps(parser_stub, args.eps)
    h_policy, refresh = _parse_h_policy(parser_stub, args.h_policy)
    x0_mode, x0_mag = _parse_x0(parser_stub, args.x0)

    if args.mode == "microricci":
        missing = [f for f, v in (("--model-selector", args.model_selector),
                                  ("--model-regressor", args.model_regressor))
                   if not v]
        if missing:
            raise UsageError(
                f"--mode microricci requires {' and '.join(missing)}")

    mesh = load_obj(args.mesh)
    if x0_mode == "zeros":
        x0 = np.zeros(mesh.n_vertices)
    else:
        x0 = make_x0(mesh, x0_mag,
                     args.seed if args.x0_seed is None else args.x0_seed)

    config = SolveConfig(
        epsilon_mode="learned" if args.mode == "microricci" else eps_mode,
        epsilon=eps_value,
        tau=args.tau,
        max_steps=args.max_steps,
        residual_mode=args.residual,
        h_policy=h_policy,
        refresh_every=refresh,
        record_energy_every=args.energy_every,
        clamp_angles=args.clamp_angles,
    )
    if args.mode == "microricci":
        selector = load_model(args.model_selector)
        regressor = load_model(args.model_regressor)
        report = solve_microricci(mesh, x0, selector, regressor, config)
    else:
        report = solve_greedy(mesh, x0, config)

    verification = None
    if args.verify:
        hc = hessian_check(mesh, x0)
        verification = {
            "gradient_max_rel_err": gradient_check(mesh, x0),
            "hessian_pattern_max_rel_err": hc.pattern_max_rel_err,
            "hessian_off_pattern_max_abs": hc.off_pattern_max_abs,
            "convexity_min_quadform": convexity_probe(
                mesh, x0, seed=args.seed).min_quadform,
        }

    payload = run_payload("solve_report", _config_echo(args), report,
                          verification=verification)
    if args.out:
        write_json(args.out, payload)
    if args.trace_csv:
        write_trace_csv(args.trace_csv, report)
    print(f"{args.mode}: terminated_by={report.terminated_by} "
          f"iterations={report.iterations_used} "
          f"final_resid={report.final_residual_inf:.3e}")
    if report.terminated_by == "error":
        return _runtime_error("solver failed", report.error)
    return 0


def cmd_collect(args):
    _, corpus = _load_manifest(args.manifest)
    config = SolveConfig(tau=args.tau, max_steps=args.max_steps)
    dataset = collect_traces(corpus, config, stride=args.stride,
                             negatives=args.negatives)
    dataset.meta["cli_config"] = _config_echo(args)
    dataset.meta["library_version"] = LIBRARY_VERSION
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset.samples)} samples to {args.out}")
    return 0


def cmd_train(args):
    dataset = load_dataset(args.dataset)
    sel = train_selector(dataset, SelectorHyper(
        lr=args.selector_lr, epochs=args.selector_epochs,
        batch_groups=args.selector_batch, margin=args.margin, seed=args.seed))
    reg = train_regressor(dataset, RegressorHyper(
        lr=args.regressor_lr, epochs=args.regressor_epochs,
        batch=args.regressor_batch, seed=args.seed))
    save_model(sel, args.out_selector)
    save_model(reg, args.out_regressor)
    echo = _config_echo(args)
    for path, model in ((args.out_selector, sel), (args.out_regressor, reg)):
        with open(str(path) + ".loss.json", "w", encoding="utf-8") as fh:
            json.dump({"loss_curve": model.loss_curve, "config": echo,
                       "library_version": LIBRARY_VERSION,
                       "param_count": model.param_count},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"selector: {sel.param_count} params, "
          f"final loss {sel.loss_curve[-1] if sel.loss_curve else None}")
    print(f"regressor: {reg.param_count} params, "
          f"final loss {reg.loss_curve[-1] if reg.loss_curve else None}")
    return 0


BENCH_METHODS = ("microricci", "selector_only", "regressor_only", "greedy")


def _bench_one(task):
    """One mesh x four configurations; runs in a worker process."""
    (idx, mesh_path, x0_seed, x0_mag, selector_path, regressor_path,
     tau, max_steps) = task
    mesh = load_obj(mesh_path)
    x0 = make_x0(mesh, x0_mag, x0_seed)
    selector = load_model(selector_path)
    regressor = load_model(regressor_path)
    H0 = build_cotan_laplacian(mesh, np.zeros(mesh.n_vertices))
    eps_safe = max_safe_step(H0)
    config = SolveConfig(tau=tau, max_steps=max_steps)
    learned = SolveConfig(epsilon_mode="learned", tau=tau, max_steps=max_steps)

    runs = {
        "greedy": solve_greedy(mesh, x0, config),
        "selector_only": solve_microricci(
            mesh, x0, selector, ConstantRegressor(eps_safe), learned),
        "regressor_only": solve_microricci(
            mesh, x0, OracleSelector(), regressor, learned),
        "microricci": solve_microricci(mesh, x0, selector, regressor, learned),
    }
    out = {}
    for method, rep in runs.items():
        quality = compute_quality(mesh, edge_lengths(mesh, rep.final_x),
                                  rep.iterations_used, x_final=rep.final_x)
        out[method] = (rep, quality)
    return idx, out


def cmd_bench(args):
    manifest_path = os.path.abspath(args.manifest)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(manifest_path)
    tasks = [
        (i, os.path.join(base, e["file"]), e["x0_seed"], e["x0_magnitude"],
         args.model_selector, args.model_regressor, args.tau, args.max_steps)
        for i, e in enumerate(manifest["entries"])
    ]
    os.makedirs(args.out_dir, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = dict(pool.map(_bench_one, tasks))
    else:
        results = dict(map(_bench_one, tasks))

    table = {}
    summary = {"kind": "bench_summary", "library_version": LIBRARY_VERSION,
               "config": _config_echo(args), "per_mesh": {}, "timing": {}}
    failed = []
    for method in BENCH_METHODS:
        reports = [results[i][method][0] for i in sorted(results)]
        for i, rep in zip(sorted(results), reports):
            if rep.terminated_by != "tolerance":
                failed.append((i, method, rep.terminated_by))
        table[method] = corpus_stats(reports)
        summary["per_mesh"][method] = {
            str(i): {
                "iterations": results[i][method][0].iterations_used,
                "terminated_by": results[i][method][0].terminated_by,
                "quality": results[i][method][1].to_dict(),
            } for i in sorted(results)
        }
        summary["timing"][method] = {
            "ms_per_iter": table[method][2], "total_s": table[method][3]}
        for i in sorted(results):
            write_trace_csv(
                os.path.join(args.out_dir, f"trace_{method}_{i:03d}.csv"),
                results[i][method][0])
    write_corpus_table(os.path.join(args.out_dir, "table.csv"), table)
    write_json(os.path.join(args.out_dir, "summary.json"), summary)
    for method in BENCH_METHODS:
        im, istd, ms, tot = table[method]
        print(f"{method:15s} iters {im:9.1f} +/- {istd:8.1f}   "
              f"{ms:8.4f} ms/iter   {tot:8.3f} s")
    if failed:
        return _runtime_error("bench runs failed to converge",
                              [{"mesh": i, "method": m, "terminated_by": t}
                               for i, m, t in failed])
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config_file(parser, args, argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(2, f"{parser.prog}: error: {exc}\n")
    except MicroRicciError as exc:
        return _runtime_error(exc)
    except OSError as exc:
        return _runtime_error(exc)


if __name__ == "__main__":
    sys.exit(main())
