"""Named experiment runs with cached on-disk artifacts.

Every run lives in its own directory under the runs root:

    report.json     summary, eval curve, final accuracies, the manifest
    losses.csv      per-step training loss (appended live, survives resume)
    checkpoint.lnet parameters plus optimizer state, written periodically
    progress.log    human-readable heartbeat while the run is alive

``ensure_*`` functions return the cached report when the stored manifest
matches the requested configuration, resume from the checkpoint when a run
was interrupted, and train from scratch otherwise. Reports therefore behave
like memoised function values: delete a run directory to force a rerun.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from pathlib import Path

from . import training
from .containers import read_visual_dataset
from .scene import Regime, SplitKind, SplitRole
from .training import SymbolicTrainConfig, VisualTrainConfig
from .visual import build_split, generate_dataset

_MANIFEST_SKIP = ("checkpoint_path", "checkpoint_every")
VISUAL_SPLIT_SEED = 0
VISUAL_IMAGE_SIDE = 40


def runs_root() -> Path:
    return Path(os.environ.get("ANALOGYLAB_RUNS", "runs"))


def _manifest(task: str, config) -> dict:
    cfg = {k: v for k, v in dataclasses.asdict(config).items()
           if k not in _MANIFEST_SKIP}
    return {"task": task, "config": cfg}


def symbolic_run_configs(seeds=(0, 1, 2)) -> dict[str, SymbolicTrainConfig]:
    """The symbolic comparison grid: four candidate regimes plus the
    excluded-function variant of top-k, at several seeds, on one shared
    transfer split."""
    runs: dict[str, SymbolicTrainConfig] = {}
    for seed in seeds:
        for regime in training.SYMBOLIC_REGIMES:
            runs[f"sym-{regime}-s{seed}"] = SymbolicTrainConfig(
                regime=regime, data_seed=seed, init_seed=seed)
        runs[f"sym-topk-exf-s{seed}"] = SymbolicTrainConfig(
            regime="topk", exclude_known_functions=True,
            data_seed=seed, init_seed=seed)
    return runs


def load_report(name: str, runs_dir: Path | None = None) -> dict | None:
    path = (runs_dir or runs_root()) / name / "report.json"
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def ensure_symbolic_run(name: str, config: SymbolicTrainConfig,
                        runs_dir: Path | None = None) -> dict:
    """Return the report for ``name``, training it first if needed."""
    rd = (runs_dir or runs_root()) / name
    manifest = _manifest("symbolic", config)
    report = load_report(name, runs_dir)
    if report is not None:
        if report.get("manifest") == manifest:
            return report
        print(f"[{name}] stored manifest differs, retraining", flush=True)
    rd.mkdir(parents=True, exist_ok=True)
    ckpt = rd / "checkpoint.lnet"
    config = dataclasses.replace(config, checkpoint_path=str(ckpt),
                                 checkpoint_every=2500)
    # a checkpoint differing only in the step budget is a prefix of the same
    # trajectory (batches derive from (data_seed, step)), so extending a run
    # resumes instead of retraining
    flex = _MANIFEST_SKIP + ("steps",)
    resume = None
    start = 0
    if ckpt.exists():
        state, _ = training.load_train_state(ckpt)
        stored = {k: v for k, v in state["config"].items() if k not in flex}
        wanted = {k: v for k, v in manifest["config"].items() if k != "steps"}
        if stored == wanted and state["step"] <= config.steps:
            resume = str(ckpt)
            start = state["step"]

    csv_path = rd / "losses.csv"
    log_path = rd / "progress.log"
    if resume is None and csv_path.exists():
        csv_path.unlink()
    _truncate_csv(csv_path, start)

    t0 = time.monotonic()
    csv = open(csv_path, "a", buffering=1)
    log = open(log_path, "a", buffering=1)
    if csv_path.stat().st_size == 0:
        csv.write("step,loss\n")
    log.write(f"=== {name} start_step={start} at {time.strftime('%F %T')}\n")

    def progress(step, loss):
        csv.write(f"{step},{loss:.8g}\n")
        if (step + 1) % 500 == 0:
            rate = (step + 1 - start) / (time.monotonic() - t0)
            log.write(f"step {step + 1} loss {loss:.4f} "
                      f"({rate:.1f} steps/s)\n")

    def on_eval(point):
        log.write(f"eval step {point['step']} "
                  f"train {point['train_accuracy']:.4f} "
                  f"validation {point['validation_accuracy']:.4f}\n")

    try:
        result = training.train_symbolic(config, resume_from=resume,
                                         progress=progress, on_eval=on_eval)
    finally:
        csv.close()
        log.close()
    report = result.to_dict(include_losses=False)
    report["manifest"] = manifest
    with open(rd / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    return report


def _truncate_csv(path: Path, start: int) -> None:
    """Drop rows at or past ``start`` (a crash can outrun the checkpoint)."""
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    kept = [ln for i, ln in enumerate(lines)
            if i == 0 or (ln.split(",", 1)[0].isdigit()
                          and int(ln.split(",", 1)[0]) < start)]
    if len(kept) != len(lines):
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(kept)


def run_symbolic_pipeline(runs_dir: Path | None = None) -> dict[str, dict]:
    """Run every symbolic grid job that is not already cached, in order."""
    reports = {}
    for name, config in symbolic_run_configs().items():
        t0 = time.monotonic()
        reports[name] = ensure_symbolic_run(name, config, runs_dir)
        dt = (time.monotonic() - t0) / 60
        acc = reports[name]["final_validation"]["accuracy"]
        print(f"[{name}] validation {acc:.4f} ({dt:.1f} min)", flush=True)
    return reports


# -- visual experiments ----------------------------------------------------

VISUAL_DATASETS: dict[str, tuple] = {
    "d-train-labc": (SplitKind.NOVEL_TRANSFER, SplitRole.TRAIN,
                     Regime.LABC, 50000, 1001),
    "d-train-normal": (SplitKind.NOVEL_TRANSFER, SplitRole.TRAIN,
                       Regime.NORMAL, 50000, 1002),
    "d-test-contrast": (SplitKind.NOVEL_TRANSFER, SplitRole.TEST,
                        Regime.LABC, 2000, 1003),
    "d-dist-labc": (SplitKind.NOVEL_TRANSFER, SplitRole.TRAIN,
                    Regime.LABC, 2000, 1004),
    "d-dist-normal": (SplitKind.NOVEL_TRANSFER, SplitRole.TRAIN,
                      Regime.NORMAL, 2000, 1005),
    "d-neutral-labc-10k": (SplitKind.NEUTRAL, SplitRole.TEST,
                           Regime.LABC, 10000, 1006),
    "d-test-normal": (SplitKind.NOVEL_TRANSFER, SplitRole.TEST,
                      Regime.NORMAL, 2000, 1007),
    "d-train-mixed": (SplitKind.NOVEL_TRANSFER, SplitRole.TRAIN,
                      Regime.MIXED, 50000, 1008),
    "d2-train-labc": (SplitKind.NOVEL_TARGET_DOMAIN, SplitRole.TRAIN,
                      Regime.LABC, 50000, 2001),
    "d2-train-normal": (SplitKind.NOVEL_TARGET_DOMAIN, SplitRole.TRAIN,
                        Regime.NORMAL, 50000, 2002),
    "d2-train-mixed": (SplitKind.NOVEL_TARGET_DOMAIN, SplitRole.TRAIN,
                       Regime.MIXED, 50000, 2003),
    "d2-test-contrast": (SplitKind.NOVEL_TARGET_DOMAIN, SplitRole.TEST,
                         Regime.LABC, 2000, 2004),
    "d2-test-normal": (SplitKind.NOVEL_TARGET_DOMAIN, SplitRole.TEST,
                       Regime.NORMAL, 2000, 2005),
    "d3i-train-labc": (SplitKind.INTERPOLATION, SplitRole.TRAIN,
                       Regime.LABC, 50000, 3001),
    "d3i-train-normal": (SplitKind.INTERPOLATION, SplitRole.TRAIN,
                         Regime.NORMAL, 50000, 3002),
    "d3i-train-mixed": (SplitKind.INTERPOLATION, SplitRole.TRAIN,
                        Regime.MIXED, 50000, 3003),
    "d3i-test-contrast": (SplitKind.INTERPOLATION, SplitRole.TEST,
                          Regime.LABC, 2000, 3004),
    "d3i-test-normal": (SplitKind.INTERPOLATION, SplitRole.TEST,
                        Regime.NORMAL, 2000, 3005),
    "d3e-train-labc": (SplitKind.EXTRAPOLATION, SplitRole.TRAIN,
                       Regime.LABC, 50000, 4001),
    "d3e-train-normal": (SplitKind.EXTRAPOLATION, SplitRole.TRAIN,
                         Regime.NORMAL, 50000, 4002),
    "d3e-train-mixed": (SplitKind.EXTRAPOLATION, SplitRole.TRAIN,
                        Regime.MIXED, 50000, 4003),
    "d3e-test-contrast": (SplitKind.EXTRAPOLATION, SplitRole.TEST,
                          Regime.LABC, 2000, 4004),
    "d3e-test-normal": (SplitKind.EXTRAPOLATION, SplitRole.TEST,
                        Regime.NORMAL, 2000, 4005),
}


def ensure_visual_dataset(name: str, runs_dir: Path | None = None) -> Path:
    """Return the path of a named question file, generating it if needed.

    Generation is deterministic in the stored seed, so an existing file with
    a matching header is the file a fresh run would produce.
    """
    kind, role, regime, count, seed = VISUAL_DATASETS[name]
    path = (runs_dir or runs_root()) / "datasets" / f"{name}.labc"
    if path.exists():
        try:
            header = read_visual_dataset(path).header
        except Exception:
            header = {}
        if (header.get("count") == count and header.get("seed") == seed
                and header.get("regime") == regime.value
                and header.get("split") == kind.value
                and header.get("image_side") == VISUAL_IMAGE_SIDE):
            return path
        print(f"[{name}] stored dataset differs, regenerating", flush=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    train, test = build_split(kind, VISUAL_SPLIT_SEED)
    split = train if role == SplitRole.TRAIN else test
    part = path.with_suffix(".part")
    t0 = time.monotonic()
    generate_dataset(split, regime, count, seed, part,
                     image_side=VISUAL_IMAGE_SIDE)
    os.replace(part, path)
    print(f"[{name}] generated {count} questions "
          f"({time.monotonic() - t0:.0f}s)", flush=True)
    return path


def visual_run_configs(runs_dir: Path | None = None) -> dict[str, VisualTrainConfig]:
    """The visual comparison grid: the candidate regimes on the transfer
    split, plus the source-blind counterparts of the two pure regimes."""
    def d(name: str) -> str:
        return str(ensure_visual_dataset(name, runs_dir))

    tests = {"contrast_test": d("d-test-contrast"),
             "normal_test": d("d-test-normal")}
    return {
        "vis-labc": VisualTrainConfig(
            dataset_path=d("d-train-labc"), eval_paths=tests),
        "vis-normal": VisualTrainConfig(
            dataset_path=d("d-train-normal"), eval_paths=tests),
        "vis-labc-blind": VisualTrainConfig(
            dataset_path=d("d-train-labc"), epochs=10, source_blind=True,
            eval_paths={"train_dist": d("d-dist-labc")}),
        "vis-normal-blind": VisualTrainConfig(
            dataset_path=d("d-train-normal"), epochs=10, source_blind=True,
            eval_paths={"train_dist": d("d-dist-normal")}),
        "vis-mixed": VisualTrainConfig(
            dataset_path=d("d-train-mixed"), eval_paths=tests),
    }


def recipe_run_configs(prefix: str, runs_dir: Path | None = None
                       ) -> dict[str, VisualTrainConfig]:
    """Regime-comparison triples for the recipe-only question families."""
    def d(name: str) -> str:
        return str(ensure_visual_dataset(name, runs_dir))

    tests = {"contrast_test": d(f"{prefix}-test-contrast"),
             "normal_test": d(f"{prefix}-test-normal")}
    tag = prefix.removeprefix("d")
    return {
        f"vis{tag}-{regime}": VisualTrainConfig(
            dataset_path=d(f"{prefix}-train-{regime}"), eval_paths=tests)
        for regime in ("labc", "normal", "mixed")
    }


def ensure_visual_run(name: str, config: VisualTrainConfig,
                      runs_dir: Path | None = None) -> dict:
    """Return the report for ``name``, training it first if needed.

    A checkpoint whose stored config differs only in ``epochs`` is resumed
    rather than discarded: the epoch shuffle depends on (train_seed, epoch)
    alone, so extending the schedule continues the same trajectory.
    """
    rd = (runs_dir or runs_root()) / name
    manifest = _manifest("visual", config)
    report = load_report(name, runs_dir)
    if report is not None:
        if report.get("manifest") == manifest:
            return report
        print(f"[{name}] stored manifest differs, retraining", flush=True)
    rd.mkdir(parents=True, exist_ok=True)
    ckpt = rd / "checkpoint.lnet"
    config = dataclasses.replace(config, checkpoint_path=str(ckpt),
                                 checkpoint_every=500)
    flex = _MANIFEST_SKIP + ("epochs",)
    n = read_visual_dataset(config.dataset_path).header["count"]
    spe = -(-n // config.batch_size)
    resume = None
    start = 0
    if ckpt.exists():
        state, _ = training.load_train_state(ckpt)
        stored = {k: v for k, v in state["config"].items() if k not in flex}
        wanted = {k: v for k, v in manifest["config"].items()
                  if k != "epochs"}
        if stored == wanted and state["step"] <= spe * config.epochs:
            resume = str(ckpt)
            start = state["step"]

    csv_path = rd / "losses.csv"
    log_path = rd / "progress.log"
    if resume is None and csv_path.exists():
        csv_path.unlink()
    _truncate_csv(csv_path, start)

    t0 = time.monotonic()
    csv = open(csv_path, "a", buffering=1)
    log = open(log_path, "a", buffering=1)
    if csv_path.stat().st_size == 0:
        csv.write("step,loss\n")
    log.write(f"=== {name} start_step={start} at {time.strftime('%F %T')}\n")

    def progress(step, loss):
        csv.write(f"{step},{loss:.8g}\n")
        if (step + 1) % 100 == 0:
            rate = (step + 1 - start) / (time.monotonic() - t0)
            log.write(f"step {step + 1} loss {loss:.4f} "
                      f"({rate:.1f} steps/s)\n")

    def on_eval(point):
        parts = " ".join(f"{k} {v:.4f}" for k, v in point.items()
                         if k not in ("step", "epoch"))
        log.write(f"eval step {point['step']} epoch {point['epoch']} {parts}\n")

    try:
        result = training.train_visual(config, resume_from=resume,
                                       progress=progress, on_eval=on_eval)
    finally:
        csv.close()
        log.close()
    report = result.to_dict(include_losses=False)
    report["manifest"] = manifest
    with open(rd / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    return report


def run_visual_pipeline(runs_dir: Path | None = None) -> dict[str, dict]:
    """Run every visual grid job that is not already cached, in order."""
    reports = {}
    for name, config in visual_run_configs(runs_dir).items():
        t0 = time.monotonic()
        reports[name] = ensure_visual_run(name, config, runs_dir)
        dt = (time.monotonic() - t0) / 60
        final = reports[name]["final_eval_sets"] or {}
        parts = " ".join(f"{k} {v['accuracy']:.4f}" for k, v in final.items())
        print(f"[{name}] {parts} ({dt:.1f} min)", flush=True)
    return reports


def run_all(runs_dir: Path | None = None) -> None:
    run_symbolic_pipeline(runs_dir)
    run_visual_pipeline(runs_dir)


# -- canned recipes --------------------------------------------------------

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


def _regime_table(runs: dict[str, VisualTrainConfig],
                  runs_dir: Path | None = None) -> dict:
    """Train (or load) each run and tabulate train / test accuracies."""
    rows = {}
    manifests = {}
    for name, config in runs.items():
        report = ensure_visual_run(name, config, runs_dir)
        manifests[name] = report["manifest"]
        row = {"train": report["final_train"]["accuracy"]}
        for label, block in (report.get("final_eval_sets") or {}).items():
            row[label] = block["accuracy"]
        rows[name] = row
    return {"rows": rows, "manifests": manifests}


def _print_rows(rows: dict[str, dict]) -> None:
    cols: list[str] = []
    for row in rows.values():
        cols += [c for c in row if c not in cols]
    width = max(len(n) for n in rows)
    print(" " * width + "  " + "  ".join(f"{c:>14s}" for c in cols))
    for name, row in rows.items():
        cells = "  ".join(f"{row[c]:14.4f}" if c in row else " " * 14
                          for c in cols)
        print(f"{name:{width}s}  {cells}")


def _recipe_exp1(runs_dir):
    runs = visual_run_configs(runs_dir)
    picked = {n: runs[n] for n in ("vis-labc", "vis-normal", "vis-mixed")}
    return _regime_table(picked, runs_dir)


def _recipe_family(prefix):
    def body(runs_dir):
        return _regime_table(recipe_run_configs(prefix, runs_dir), runs_dir)
    return body


def _recipe_blind(runs_dir):
    runs = visual_run_configs(runs_dir)
    picked = {n: runs[n] for n in ("vis-labc-blind", "vis-normal-blind")}
    out = _regime_table(picked, runs_dir)
    rows = out["rows"]
    out["margin"] = (rows["vis-normal-blind"]["train_dist"]
                     - rows["vis-labc-blind"]["train_dist"])
    return out


def _recipe_sym_table(runs_dir):
    import statistics

    reports = run_symbolic_pipeline(runs_dir)
    by_regime: dict[str, dict[str, float]] = {}
    for name, report in reports.items():
        regime = name.rsplit("-s", 1)[0].removeprefix("sym-")
        acc = report["final_validation"]["accuracy"]
        by_regime.setdefault(regime, {})[name] = acc
    rows = {regime: {"median": statistics.median(accs.values()), **accs}
            for regime, accs in by_regime.items()}
    return {"rows": {r: {"median": v["median"]} for r, v in rows.items()},
            "per_seed": {r: {k: v for k, v in row.items() if k != "median"}
                         for r, row in rows.items()}}


def _recipe_distance(runs_dir):
    from . import analysis

    runs = visual_run_configs(runs_dir)
    out = {"rows": {}}
    for run, data in (("vis-labc", "d-dist-labc"),
                      ("vis-normal", "d-dist-normal")):
        ensure_visual_run(run, runs[run], runs_dir)
        ckpt = (runs_dir or runs_root()) / run / "checkpoint.lnet"
        _, _, model = training.load_scorer(ckpt)
        dataset = read_visual_dataset(ensure_visual_dataset(data, runs_dir))
        states, labels = analysis.capture_states(model, dataset,
                                                 min(2000, len(dataset)))
        report = analysis.relation_domain_distance_report(states, labels)
        out["rows"][run] = {
            f"{space}/{kind}": report[space][f"inter_{kind}"]["mean"]
            for space in ("raw", "normalized")
            for kind in ("relation", "domain")}
    return out


RECIPES = {
    "exp1-transfer": _recipe_exp1,
    "exp2-novel-domain": _recipe_family("d2"),
    "exp3-interp": _recipe_family("d3i"),
    "exp3-extrap": _recipe_family("d3e"),
    "exp3-blind": _recipe_blind,
    "sym-table3": _recipe_sym_table,
    "analysis-table-distance": _recipe_distance,
}


def run_recipe(name: str, runs_dir: Path | None = None) -> dict:
    """Run one canned experiment, write its manifest, print its table."""
    body = RECIPES[name]
    t0 = time.monotonic()
    results = body(runs_dir)
    results["recipe"] = name
    results["build"] = build_id()
    results["created"] = time.strftime("%FT%T")
    results["minutes"] = round((time.monotonic() - t0) / 60, 1)
    rdir = (runs_dir or runs_root()) / "recipes"
    rdir.mkdir(parents=True, exist_ok=True)
    path = rdir / f"{name}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=1)
    if "rows" in results:
        _print_rows(results["rows"])
    if "margin" in results:
        print(f"margin {results['margin']:+.4f}")
    print(f"[{name}] wrote {path}")
    return results


if __name__ == "__main__":
    import sys

    if sys.argv[1:] == ["sym-pipeline"]:
        run_symbolic_pipeline()
    elif sys.argv[1:] == ["vis-pipeline"]:
        run_visual_pipeline()
    elif sys.argv[1:] == ["all"]:
        run_all()
    elif len(sys.argv) == 3 and sys.argv[1] == "recipe":
        run_recipe(sys.argv[2])
    else:
        raise SystemExit(f"unknown pipeline {sys.argv[1:]!r}")
