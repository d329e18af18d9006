"""Command line front end.

Heavy imports happen inside the command handlers, after argument parsing,
so that ``--threads`` can pin the BLAS thread pools before numpy loads.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .errors import AnalogyLabError

SPLIT_NAMES = ("neutral", "novel-transfer", "novel-target-domain",
               "interpolation", "extrapolation")
REGIME_NAMES = ("normal", "labc", "mixed")
GRADCHECK_LAYERS = ("dense", "relu", "conv2d", "rnn", "relation-core")
RECIPES = ("exp1-transfer", "exp2-novel-domain", "exp3-interp", "exp3-extrap",
           "exp3-blind", "sym-table3", "analysis-table-distance")

# flags mirrored onto the training config dataclasses, by task; names match
# the dataclass fields one for one (checked by the test suite)
SYMBOLIC_CONFIG_FLAGS = {
    "regime": str, "dims": int, "set_size": int, "candidate_count": int,
    "steps": int, "batch_size": int, "lr": float, "data_seed": int,
    "init_seed": int, "split_seed": int, "holdout_fraction": float,
    "exclude_known_functions": bool, "topk_pool": int, "generator_lr": float,
    "generator_noise": float, "eval_every": int, "eval_count": int,
    "checkpoint_every": int,
}
VISUAL_CONFIG_FLAGS = {
    "dataset_path": str, "epochs": int, "batch_size": int, "lr": float,
    "train_seed": int, "init_seed": int, "source_blind": bool,
    "eval_every_epochs": int, "eval_count": int, "checkpoint_every": int,
}


class CliError(Exception):
    """A user-facing failure; the message goes to stderr, exit status 1."""


def build_id() -> str:
    """Source revision if a git checkout is visible, else the version."""
    import subprocess

    root = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "-C", str(root), "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    from . import __version__
    return f"v{__version__}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="analogylab",
        description="Generate, train on, and analyse contrastive analogy "
                    "questions.")
    p.add_argument("--threads", type=int, metavar="N",
                   help="cap the numeric thread pools at N")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("gen-visual", help="write a visual question file")
    q.add_argument("--split", choices=SPLIT_NAMES, default="neutral")
    q.add_argument("--role", choices=("train", "test"), default="train")
    q.add_argument("--regime", choices=REGIME_NAMES, default="labc")
    q.add_argument("--count", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--split-seed", type=int, default=0)
    q.add_argument("--side", type=int, default=80, help="panel edge in pixels")
    q.add_argument("--candidates", type=int, default=4)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_gen_visual)

    q = sub.add_parser("gen-symbolic", help="write a symbolic problem file")
    q.add_argument("--role", choices=("train", "validation"), default="train")
    q.add_argument("--count", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--split-seed", type=int, default=0)
    q.add_argument("--holdout-fraction", type=float, default=0.1)
    q.add_argument("--dims", type=int, default=16)
    q.add_argument("--set-size", type=int, default=8)
    q.add_argument("--candidates", type=int, default=4)
    q.add_argument("--strategy", choices=("explicit", "random"),
                   default="explicit")
    q.add_argument("--exclude-known-functions", action="store_true",
                   help="random decoys avoid every set-function value")
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_gen_symbolic)

    q = sub.add_parser("verify", help="re-derive answer status for stored "
                                      "visual questions")
    q.add_argument("paths", nargs="+")
    q.set_defaults(func=_cmd_verify)

    q = sub.add_parser("train", help="train a scorer and write a checkpoint")
    q.add_argument("--task", choices=("symbolic", "visual"), required=True)
    q.add_argument("--out", required=True, help="run directory")
    q.add_argument("--config", help="JSON file of config fields")
    q.add_argument("--resume", action="store_true",
                   help="continue from the checkpoint in the run directory")
    q.add_argument("--log-every", type=int, default=500)
    q.add_argument("--eval-set", action="append", default=[],
                   metavar="NAME=PATH",
                   help="extra evaluation dataset (visual task)")
    for name, kind in {**SYMBOLIC_CONFIG_FLAGS, **VISUAL_CONFIG_FLAGS}.items():
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            q.add_argument(flag, action=argparse.BooleanOptionalAction,
                           default=None)
        else:
            q.add_argument(flag, type=kind, default=None)
    q.set_defaults(func=_cmd_train)

    q = sub.add_parser("eval", help="score a dataset with a trained model")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--limit", type=int)
    q.add_argument("--batch-size", type=int)
    q.add_argument("--source-blind", action="store_true",
                   help="zero the source panels before scoring (visual)")
    q.set_defaults(func=_cmd_eval)

    q = sub.add_parser("analyze", help="hidden-state geometry of a visual "
                                       "model on a question file")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--count", type=int, default=2000)
    q.add_argument("--pca-dims", type=int, default=2)
    q.add_argument("--out-dir", default=".")
    q.set_defaults(func=_cmd_analyze)

    q = sub.add_parser("render", help="export panels as portable graymaps")
    q.add_argument("--out", required=True,
                   help="output file, or directory with --data")
    q.add_argument("--domain", help="domain name, e.g. shape-colour")
    q.add_argument("--values", help="comma-separated values, e.g. 3,7")
    q.add_argument("--seed", type=int, default=0, help="decoration seed")
    q.add_argument("--side", type=int, default=80)
    q.add_argument("--data", help="question file to draw from")
    q.add_argument("--index", type=int, default=0,
                   help="question number within --data")
    q.set_defaults(func=_cmd_render)

    q = sub.add_parser("gradcheck", help="finite-difference audit of every "
                                         "layer's backward pass")
    q.add_argument("--all", action="store_true",
                   help="audit every layer (the default)")
    q.add_argument("--layer", action="append", choices=GRADCHECK_LAYERS,
                   help="restrict to named layers (repeatable)")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--max-per-param", type=int, default=200)
    q.add_argument("--tolerance", type=float, default=1e-5)
    q.set_defaults(func=_cmd_gradcheck)

    q = sub.add_parser("experiment", help="run a canned experiment end to end")
    q.add_argument("recipe", choices=RECIPES)
    q.add_argument("--runs-dir", help="cache directory for datasets and runs")
    q.set_defaults(func=_cmd_experiment)
    return p


def _cmd_gen_visual(args) -> int:
    from .scene import Regime, SplitKind
    from .visual import build_split, generate_dataset

    train, test = build_split(SplitKind(args.split), args.split_seed)
    spec = {"train": train, "test": test}[args.role]
    generate_dataset(spec, Regime(args.regime), args.count, args.seed,
                     args.out, candidate_count=args.candidates,
                     image_side=args.side)
    print(f"wrote {args.count} questions to {args.out}")
    return 0


def _cmd_gen_symbolic(args) -> int:
    from .containers import write_symbolic_dataset
    from .symbolic import (CandidateStrategy, build_symbolic_split,
                           generate_problems)

    split = build_symbolic_split(args.dims, args.holdout_fraction,
                                 args.split_seed)
    pairs = {"train": split.train_pairs,
             "validation": split.test_pairs}[args.role]
    problems = generate_problems(
        pairs, args.count, args.seed, dims=args.dims, set_size=args.set_size,
        candidate_count=args.candidates,
        strategy=CandidateStrategy(args.strategy),
        exclude_known_functions=args.exclude_known_functions)
    write_symbolic_dataset(args.out, problems, split=args.role,
                           seed=args.seed)
    print(f"wrote {len(problems)} problems to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    from .visual import verify_dataset

    violations = 0
    for path in args.paths:
        r = verify_dataset(path)
        print(f"{path}: {r['total']} questions, "
              f"{r['uniqueness_violations']} violations, "
              f"{r['labc_ok']} labc, {r['normal_ok']} normal")
        violations += r["uniqueness_violations"]
    return 1 if violations else 0


def _progress_printer(log_every: int):
    import time

    state = {"t": time.time(), "n": 0}

    def progress(step, loss):
        state["n"] += 1
        if (step + 1) % log_every == 0:
            now = time.time()
            rate = state["n"] / max(now - state["t"], 1e-9)
            state["t"], state["n"] = now, 0
            print(f"step {step + 1} loss {loss:.4f} ({rate:.1f} steps/s)",
                  flush=True)
    return progress


def _cmd_train(args) -> int:
    from . import training

    if args.task == "symbolic":
        cfg_cls, flags = training.SymbolicTrainConfig, SYMBOLIC_CONFIG_FLAGS
    else:
        cfg_cls, flags = training.VisualTrainConfig, VISUAL_CONFIG_FLAGS
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
        known = {f.name for f in dataclasses.fields(cfg_cls)}
        bad = sorted(set(values) - known)
        if bad:
            raise CliError(f"unknown config fields for {args.task} task: "
                           + ", ".join(bad))
    for name in flags:
        given = getattr(args, name)
        if given is not None:
            values[name] = given
    if args.eval_set:
        if args.task != "visual":
            raise CliError("--eval-set applies to the visual task only")
        pairs = {}
        for item in args.eval_set:
            name, sep, path = item.partition("=")
            if not sep or not name or not path:
                raise CliError(f"--eval-set wants NAME=PATH, got {item!r}")
            pairs[name] = path
        values["eval_paths"] = pairs

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.lnet"
    values["checkpoint_path"] = str(ckpt)
    try:
        config = cfg_cls(**values)
    except (TypeError, ValueError) as e:
        raise CliError(str(e)) from None
    resume = str(ckpt) if args.resume and ckpt.exists() else None

    progress = _progress_printer(args.log_every)

    def on_eval(point):
        rest = " ".join(f"{k} {v:.4f}" for k, v in point.items()
                        if k not in ("step", "epoch"))
        print(f"eval step {point['step']} {rest}", flush=True)

    trainer = (training.train_symbolic if args.task == "symbolic"
               else training.train_visual)
    report = trainer(config, resume_from=resume, progress=progress,
                     on_eval=on_eval)
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(include_losses=False), fh, indent=2)
    with open(out / "losses.csv", "w") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(report.losses):
            fh.write(f"{report.start_step + i + 1},{loss:.8g}\n")
    for label, block in (("train", report.final_train),
                         ("validation", report.final_validation)):
        if block:
            print(f"final {label} accuracy {block['accuracy']:.4f}")
    if report.final_eval_sets:
        for name, block in report.final_eval_sets.items():
            print(f"final {name} accuracy {block['accuracy']:.4f}")
    print(f"checkpoint {ckpt}")
    return 0


def _load_scorer(path: str):
    """(task, config dict, model) from a training checkpoint."""
    from . import training

    try:
        return training.load_scorer(path)
    except ValueError as e:
        raise CliError(str(e)) from None


def _cmd_eval(args) -> int:
    from . import training
    from .containers import read_symbolic_dataset, read_visual_dataset

    task, cfg, model = _load_scorer(args.checkpoint)
    if task == "symbolic":
        if args.source_blind:
            raise CliError("--source-blind applies to visual checkpoints")
        _, problems = read_symbolic_dataset(args.data)
        if args.limit:
            problems = problems[:args.limit]
        report = training.evaluate_symbolic(
            model, problems, batch_size=args.batch_size or 256)
    else:
        dataset = read_visual_dataset(args.data)
        report = training.evaluate_visual(
            model, dataset, source_blind=args.source_blind,
            limit=args.limit, batch_size=args.batch_size or 64)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_analyze(args) -> int:
    from . import analysis
    from .containers import read_visual_dataset

    task, _, model = _load_scorer(args.checkpoint)
    if task != "visual":
        raise CliError("hidden-state analysis wants a visual checkpoint")
    dataset = read_visual_dataset(args.data)
    n = min(args.count, len(dataset))
    states, labels = analysis.capture_states(model, dataset, n)
    pca = analysis.pca_project(states, out_dims=args.pca_dims)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analysis.export_coordinates_csv(out / "coordinates.csv",
                                    pca.coordinates, labels)
    report = {
        "count": n,
        "explained_ratio": [float(v) for v in pca.explained_ratio],
        "distances": analysis.relation_domain_distance_report(states, labels),
    }
    with open(out / "analysis.json", "w") as fh:
        json.dump(report, fh, indent=2)
    for space, block in report["distances"].items():
        print(f"{space}: inter-relation {block['inter_relation']['mean']:.4f} "
              f"inter-domain {block['inter_domain']['mean']:.4f}")
    print(f"wrote {out / 'coordinates.csv'} and {out / 'analysis.json'}")
    return 0


def _cmd_render(args) -> int:
    from .raster import Bitmap, export_graymap, render_panel

    if args.data:
        from .containers import read_visual_dataset

        dataset = read_visual_dataset(args.data)
        if not 0 <= args.index < len(dataset):
            raise CliError(f"--index {args.index} outside 0..{len(dataset) - 1}")
        panels = dataset.rasters(args.index)
        q = dataset.questions[args.index]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        names = [f"context-{i}" for i in range(5)]
        names += [f"candidate-{i}" for i in range(panels.shape[0] - 5)]
        for name, panel in zip(names, panels):
            export_graymap(Bitmap(dataset.image_side, panel),
                           out / f"{name}.pgm")
        print(f"wrote {panels.shape[0]} panels of question {args.index} "
              f"({q.relation.name}, {q.source_domain.name} -> "
              f"{q.target_domain.name}) to {out}")
        return 0

    if not args.domain or not args.values:
        raise CliError("give either --data or both --domain and --values")
    from .scene import DomainKind, PanelContent

    name = args.domain.replace("-", "_").upper()
    try:
        domain = DomainKind[name]
    except KeyError:
        raise CliError(f"unknown domain {args.domain!r}") from None
    try:
        values = frozenset(int(v) for v in args.values.split(","))
    except ValueError:
        raise CliError(f"--values wants integers, got {args.values!r}") from None
    bitmap = render_panel(PanelContent(domain, values, args.seed), args.side)
    export_graymap(bitmap, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from . import nn

    report = nn.layer_grad_report(args.layer, seed=args.seed,
                                  max_per_param=args.max_per_param)
    failed = False
    for name, err in report.items():
        ok = err < args.tolerance
        failed = failed or not ok
        print(f"{name:14s} {err:.3e} {'ok' if ok else 'FAIL'}")
    return 1 if failed else 0


def _cmd_experiment(args) -> int:
    if args.runs_dir:
        os.environ["ANALOGYLAB_RUNS"] = args.runs_dir
    from . import experiments

    experiments.run_recipe(args.recipe)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads wants a positive count")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "VECLIB_MAXIMUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except AnalogyLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
