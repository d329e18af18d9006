"""Training loops for the candidate-scoring models.

The symbolic trainer draws problems on the fly. Every batch is derived from
``SeedSequence([data_seed, step])`` alone, so an interrupted run restored
from a checkpoint replays the exact remaining batches and the loss curve is
bit-identical to an uninterrupted run in single-threaded mode.

The visual trainer reads a pre-built question file and makes several passes
over it; the epoch shuffle is derived from ``SeedSequence([train_seed,
epoch])``, which gives the same resume guarantee at any step boundary.

Candidate regimes
    explicit     decoys are rival set-function values (built by the sampler)
    random       decoys are uniform random values
    topk         a random pool is scored with the current parameters and the
                 softmax sees only the correct candidate plus the k best
                 scoring decoys
    adversarial  decoys come from a learned generator that is updated to
                 maximise the solver loss after every solver step
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from . import nn
from .containers import read_visual_dataset
from .errors import DivergedError
from .models import CandidateGenerator, SymbolicScorer, VisualScorer
from .symbolic import (
    COARSE_GAIN,
    SET_SIZE,
    CandidateStrategy,
    TransferSplit,
    batch_arrays,
    build_symbolic_split,
    generate_problems,
    sample_problem,
    value_feature_grad,
    value_features,
    write_value_block,
)

SYMBOLIC_REGIMES = ("explicit", "random", "topk", "adversarial")


@dataclasses.dataclass
class SymbolicTrainConfig:
    regime: str = "explicit"
    dims: int = 16
    set_size: int = SET_SIZE
    candidate_count: int = 4
    steps: int = 60000
    batch_size: int = 32
    lr: float = 3e-4
    data_seed: int = 0
    init_seed: int = 0
    split_seed: int = 0
    holdout_fraction: float = 0.1
    # random / topk pools only
    exclude_known_functions: bool = False
    topk_pool: int = 16
    # adversarial only
    generator_lr: float = 3e-4
    generator_noise: float = 0.05
    eval_every: int = 5000
    eval_count: int = 2000
    checkpoint_path: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.regime not in SYMBOLIC_REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime == "topk" and self.candidate_count - 1 >= self.topk_pool:
            raise ValueError("top-k keep count must be below the pool size")

    def sample_kwargs(self) -> dict:
        return {"dims": self.dims, "set_size": self.set_size,
                "candidate_count": self.candidate_count}


@dataclasses.dataclass
class VisualTrainConfig:
    dataset_path: str = ""
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-4
    train_seed: int = 0
    init_seed: int = 0
    source_blind: bool = False
    eval_paths: dict[str, str] = dataclasses.field(default_factory=dict)
    eval_every_epochs: int = 1
    eval_count: int = 1000
    checkpoint_path: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.dataset_path:
            raise ValueError("dataset_path is required")


@dataclasses.dataclass
class EvalReport:
    accuracy: float
    count: int
    per_relation: dict[str, float]
    per_pair: dict[str, float]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class TrainReport:
    task: str
    regime: str
    steps: int
    start_step: int
    losses: list[float]
    evals: list[dict]
    final_train: dict | None
    final_validation: dict | None
    data_seed: int
    init_seed: int
    wall_seconds: float
    final_eval_sets: dict | None = None

    def to_dict(self, include_losses: bool = True) -> dict:
        out = dataclasses.asdict(self)
        if not include_losses:
            del out["losses"]
        return out


def select_topk(scores: np.ndarray, correct_index: int, k: int) -> list[int]:
    """Retained candidate slots: the correct one plus the k highest-scoring
    incorrect ones, returned in slot order. Ties go to the lower slot."""
    order = np.argsort(-scores, kind="stable")
    keep = [int(i) for i in order if i != correct_index][:k]
    return sorted(keep + [int(correct_index)])


def evaluate_symbolic(model: SymbolicScorer, problems: list,
                      batch_size: int = 256) -> EvalReport:
    """Accuracy of argmax-score answers, broken down by set function and by
    (source dim -> target dim) transfer pair."""
    hits: dict[str, list[int]] = {}
    pair_hits: dict[str, list[int]] = {}
    total = correct = 0
    for lo in range(0, len(problems), batch_size):
        chunk = problems[lo:lo + batch_size]
        ctx, cands, answers = batch_arrays(chunk)
        scores, _ = model.score_batch(ctx, cands, want_grads=False)
        pred = scores.argmax(axis=1)
        for p, ok in zip(chunk, pred == answers):
            hits.setdefault(p.function.name, []).append(int(ok))
            pair_hits.setdefault(f"{p.source_dim}->{p.target_dim}", []).append(int(ok))
            correct += int(ok)
            total += 1
    return EvalReport(
        accuracy=correct / total if total else 0.0,
        count=total,
        per_relation={k: float(np.mean(v)) for k, v in sorted(hits.items())},
        per_pair={k: float(np.mean(v)) for k, v in sorted(pair_hits.items())},
    )


def make_symbolic_eval_problems(split: TransferSplit, role: str, count: int,
                                config: SymbolicTrainConfig) -> list:
    """Fixed evaluation problems, derived from the split seed alone so every
    regime and every training seed answers the same questions. Decoys are
    rival function values regardless of the training regime."""
    pairs = {"train": split.train_pairs, "validation": split.test_pairs}[role]
    ns = {"train": 1, "validation": 2}[role]
    return generate_problems(
        pairs, count, config.split_seed * 1_000_003 + ns,
        strategy=CandidateStrategy.EXPLICIT, **config.sample_kwargs())


def evaluate_visual(model: VisualScorer, dataset, *,
                    source_blind: bool = False, limit: int | None = None,
                    batch_size: int = 64) -> EvalReport:
    """Accuracy of argmax-score answers over a question file, broken down by
    relation and by (source domain -> target domain) pair."""
    count = len(dataset) if limit is None else min(limit, len(dataset))
    hits: dict[str, list[int]] = {}
    pair_hits: dict[str, list[int]] = {}
    total = correct = 0
    for lo in range(0, count, batch_size):
        idx = np.arange(lo, min(lo + batch_size, count))
        panels = dataset.raster_batch(idx).astype(model.dtype) / 255.0
        scores, _ = model.score_batch(panels, want_grads=False,
                                      source_blind=source_blind)
        for i, p in zip(idx, scores.argmax(axis=1)):
            q = dataset.questions[i]
            ok = int(p == q.answer_index)
            hits.setdefault(q.relation.name, []).append(ok)
            pair_hits.setdefault(
                f"{q.source_domain.name}->{q.target_domain.name}", []).append(ok)
            correct += ok
            total += 1
    return EvalReport(
        accuracy=correct / total if total else 0.0,
        count=total,
        per_relation={k: float(np.mean(v)) for k, v in sorted(hits.items())},
        per_pair={k: float(np.mean(v)) for k, v in sorted(pair_hits.items())},
    )


def _explicit_or_random_step(config, split, model, opt, rng) -> float:
    strategy = (CandidateStrategy.EXPLICIT if config.regime == "explicit"
                else CandidateStrategy.RANDOM)
    problems = [sample_problem(split.train_pairs, rng, strategy=strategy,
                               exclude_known_functions=config.exclude_known_functions,
                               **config.sample_kwargs())
                for _ in range(config.batch_size)]
    ctx, cands, answers = batch_arrays(problems)
    scores, cache = model.score_batch(ctx, cands)
    loss, dscores = nn.cross_entropy_batch(scores, answers)
    _, _, grads = model.backward(cache, dscores)
    opt.step(model.param_dict(), grads)
    return loss


def _topk_step(config, split, model, opt, rng) -> float:
    kwargs = config.sample_kwargs()
    kwargs["candidate_count"] = config.topk_pool + 1
    problems = [sample_problem(split.train_pairs, rng,
                               strategy=CandidateStrategy.RANDOM,
                               exclude_known_functions=config.exclude_known_functions,
                               **kwargs)
                for _ in range(config.batch_size)]
    ctx, cands, answers = batch_arrays(problems)
    # the whole pool is scored once with the current (pre-update)
    # parameters; the softmax and the backward pass then see only the
    # retained slots, via the gather in backward
    pool_scores, cache = model.score_batch(ctx, cands)
    B = len(problems)
    K = config.candidate_count
    keep = np.empty((B, K), dtype=np.int64)
    gated_answers = np.empty(B, dtype=np.int64)
    for b in range(B):
        retained = select_topk(pool_scores[b], int(answers[b]), K - 1)
        keep[b] = retained
        gated_answers[b] = retained.index(int(answers[b]))
    sub_scores = pool_scores[np.arange(B)[:, None], keep]
    loss, dscores = nn.cross_entropy_batch(sub_scores, gated_answers)
    _, _, grads = model.backward(cache, dscores, keep=keep)
    opt.step(model.param_dict(), grads)
    return loss


def _adversarial_step(config, split, model, opt, gen, gen_opt, rng) -> float:
    kwargs = config.sample_kwargs()
    kwargs["candidate_count"] = 1          # sampler supplies the correct one only
    problems = [sample_problem(split.train_pairs, rng,
                               strategy=CandidateStrategy.RANDOM, **kwargs)
                for _ in range(config.batch_size)]
    ctx, correct, _ = batch_arrays(problems)
    B = ctx.shape[0]
    K = config.candidate_count
    m = config.set_size
    answers = rng.integers(0, K, size=B)
    rows = np.arange(B)
    slot_grid = np.broadcast_to(np.arange(K), (B, K))
    decoy_slots = slot_grid[slot_grid != answers[:, None]].reshape(B, K - 1)

    # one generator pass per decoy slot, each on its own noisy view of V_t;
    # the noise perturbs the values and the derived feature columns together
    # so every noisy row stays a consistent encoding of some value vector
    d = config.dims
    d4 = 4 * d
    target_objs = ctx[:, m + 1:]
    gen_caches = []
    gen_outs = []
    cands = np.zeros((B, K, ctx.shape[2]), dtype=ctx.dtype)
    cands[:, :, d4 + 3:] = 1.0
    cands[rows, answers] = correct[:, 0]
    for j in range(K - 1):
        noisy = target_objs.copy()
        jittered = noisy[:, :, :d] + rng.normal(
            0.0, config.generator_noise, size=(B, m, d)).astype(ctx.dtype)
        write_value_block(noisy, jittered, d)
        out, gcache = gen.forward(noisy)
        gen_caches.append(gcache)
        gen_outs.append(out)
        sin, cos = value_features(out)
        cands[rows, decoy_slots[:, j], :d] = out
        cands[rows, decoy_slots[:, j], d:2 * d] = COARSE_GAIN * out
        cands[rows, decoy_slots[:, j], 2 * d:3 * d] = sin
        cands[rows, decoy_slots[:, j], 3 * d:d4] = cos

    # one pass yields both players' gradients at the current parameters:
    # the solver descends the loss, the generator ascends it through the
    # decoy inputs it produced
    scores, cache = model.score_batch(ctx, cands)
    loss, dscores = nn.cross_entropy_batch(scores, answers)
    _, dcand, grads = model.backward(cache, dscores)
    opt.step(model.param_dict(), grads)
    gen_grads: dict[str, np.ndarray] = {}
    for j in range(K - 1):
        dslot = dcand[rows, decoy_slots[:, j]]
        dout = -(dslot[:, :d] + COARSE_GAIN * dslot[:, d:2 * d]
                 + value_feature_grad(gen_outs[j], dslot[:, 2 * d:3 * d],
                                      dslot[:, 3 * d:d4]))
        for k, g in gen.backward(gen_caches[j], dout).items():
            if k in gen_grads:
                gen_grads[k] += g
            else:
                gen_grads[k] = g
    gen_opt.step(gen.param_dict(), gen_grads)
    return loss


def save_train_checkpoint(path, task: str, step: int, config, model, opt,
                          gen=None, gen_opt=None) -> None:
    records = model.spec_records()
    state = {"kind": "train-state", "task": task, "step": step,
             "adam_t": opt.t, "config": dataclasses.asdict(config)}
    if gen is not None:
        state["generator_adam_t"] = gen_opt.t
    records.append(state)
    params = model.param_dict()
    arrays = list(params.items()) + opt.state_arrays(params)
    if gen is not None:
        gparams = gen.param_dict()
        arrays += list(gparams.items()) + gen_opt.state_arrays(gparams)
    nn.save_checkpoint(path, records, arrays)


def load_train_state(path):
    """Returns (train-state record, arrays) from a checkpoint file."""
    records, arrays = nn.load_checkpoint(path)
    for rec in records:
        if rec.get("kind") == "train-state":
            return rec, arrays
    raise ValueError(f"{path}: checkpoint carries no training state")


def load_scorer(path):
    """Rebuild the model stored in a checkpoint -> (task, config, model)."""
    records, arrays = nn.load_checkpoint(path)
    state = next((r for r in records if r.get("kind") == "train-state"), None)
    if state is None:
        raise ValueError(f"{path}: checkpoint carries no training state")
    cfg = state["config"]
    if state["task"] == "symbolic":
        model = SymbolicScorer(cfg["dims"], cfg.get("init_seed", 0))
    else:
        spec = next((r for r in records
                     if r.get("model") == "visual-scorer"), None)
        if spec is None:
            raise ValueError(f"{path}: no visual scorer spec in checkpoint")
        model = VisualScorer(spec["image_side"], cfg.get("init_seed", 0))
    model.load_param_dict(arrays)
    return state["task"], cfg, model


def train_symbolic(config: SymbolicTrainConfig, *, resume_from=None,
                   progress=None, on_eval=None) -> TrainReport:
    """Run (or resume) one symbolic training job and return its report.

    ``progress``, when given, is called as progress(step, loss) after every
    step; ``on_eval`` receives each periodic evaluation dict as it is
    measured. Checkpoints are written to ``config.checkpoint_path`` every
    ``checkpoint_every`` steps and at the end.
    """
    split = build_symbolic_split(config.dims, config.holdout_fraction,
                                 config.split_seed)
    model = SymbolicScorer(config.dims, config.init_seed)
    opt = nn.Adam(model.param_dict(), lr=config.lr)
    gen = gen_opt = None
    if config.regime == "adversarial":
        gen = CandidateGenerator(config.dims, config.init_seed)
        gen_opt = nn.Adam(gen.param_dict(), lr=config.generator_lr)

    start_step = 0
    if resume_from is not None:
        state, arrays = load_train_state(resume_from)
        if state["task"] != "symbolic":
            raise ValueError(f"{resume_from}: not a symbolic checkpoint")
        model.load_param_dict(arrays)
        opt.load_state(model.param_dict(), arrays, state["adam_t"])
        if gen is not None:
            gen.load_param_dict(arrays)
            gen_opt.load_state(gen.param_dict(), arrays,
                               state["generator_adam_t"])
        start_step = state["step"]

    eval_sets: dict[str, list] = {}

    def eval_point(step: int) -> dict:
        for role in ("train", "validation"):
            if role not in eval_sets:
                eval_sets[role] = make_symbolic_eval_problems(
                    split, role, config.eval_count, config)
        tr = evaluate_symbolic(model, eval_sets["train"])
        va = evaluate_symbolic(model, eval_sets["validation"])
        return {"step": step, "train_accuracy": tr.accuracy,
                "validation_accuracy": va.accuracy}

    losses: list[float] = []
    evals: list[dict] = []
    t0 = time.monotonic()
    for step in range(start_step, config.steps):
        rng = np.random.default_rng(np.random.SeedSequence([config.data_seed, step]))
        if config.regime == "topk":
            loss = _topk_step(config, split, model, opt, rng)
        elif config.regime == "adversarial":
            loss = _adversarial_step(config, split, model, opt, gen, gen_opt, rng)
        else:
            loss = _explicit_or_random_step(config, split, model, opt, rng)
        if not np.isfinite(loss):
            raise DivergedError(f"non-finite loss at step {step}")
        losses.append(loss)
        done = step + 1
        if config.eval_every and config.eval_count and (
                done % config.eval_every == 0 or done == config.steps):
            evals.append(eval_point(done))
            if on_eval is not None:
                on_eval(evals[-1])
        if config.checkpoint_path and config.checkpoint_every and (
                done % config.checkpoint_every == 0):
            save_train_checkpoint(config.checkpoint_path, "symbolic", done,
                                  config, model, opt, gen, gen_opt)
        if progress is not None:
            progress(step, loss)

    if config.checkpoint_path:
        save_train_checkpoint(config.checkpoint_path, "symbolic", config.steps,
                              config, model, opt, gen, gen_opt)
    final_train = final_validation = None
    if config.eval_count:
        for role in ("train", "validation"):
            if role not in eval_sets:
                eval_sets[role] = make_symbolic_eval_problems(
                    split, role, config.eval_count, config)
        final_train = evaluate_symbolic(model, eval_sets["train"]).to_dict()
        final_validation = evaluate_symbolic(model, eval_sets["validation"]).to_dict()
    report = TrainReport(
        task="symbolic", regime=config.regime, steps=config.steps,
        start_step=start_step, losses=losses, evals=evals,
        final_train=final_train, final_validation=final_validation,
        data_seed=config.data_seed, init_seed=config.init_seed,
        wall_seconds=time.monotonic() - t0)
    return report


def train_visual(config: VisualTrainConfig, *, resume_from=None,
                 progress=None, on_eval=None) -> TrainReport:
    """Run (or resume) one visual training job and return its report.

    The question file at ``config.dataset_path`` is visited ``epochs`` times
    in a per-epoch shuffled order. The shuffle for epoch e depends only on
    (train_seed, e), so a run resumed from any step boundary replays the
    identical batch sequence. A source-blind job both trains and evaluates
    with the source embeddings zeroed.
    """
    dataset = read_visual_dataset(config.dataset_path)
    all_answers = np.array([q.answer_index for q in dataset.questions])
    model = VisualScorer(dataset.image_side, config.init_seed)
    opt = nn.Adam(model.param_dict(), lr=config.lr)

    start_step = 0
    if resume_from is not None:
        state, arrays = load_train_state(resume_from)
        if state["task"] != "visual":
            raise ValueError(f"{resume_from}: not a visual checkpoint")
        model.load_param_dict(arrays)
        opt.load_state(model.param_dict(), arrays, state["adam_t"])
        start_step = state["step"]

    n = len(dataset)
    spe = -(-n // config.batch_size)        # steps per epoch, tail included
    total_steps = spe * config.epochs
    eval_sets = [(name, read_visual_dataset(path))
                 for name, path in sorted(config.eval_paths.items())]

    def eval_point(step: int) -> dict:
        point = {"step": step, "epoch": step // spe,
                 "train_accuracy": evaluate_visual(
                     model, dataset, source_blind=config.source_blind,
                     limit=config.eval_count).accuracy}
        for name, ds in eval_sets:
            point[f"{name}_accuracy"] = evaluate_visual(
                model, ds, source_blind=config.source_blind,
                limit=config.eval_count).accuracy
        return point

    losses: list[float] = []
    evals: list[dict] = []
    t0 = time.monotonic()
    perm_epoch = -1
    perm = None
    for step in range(start_step, total_steps):
        epoch, at = divmod(step, spe)
        if epoch != perm_epoch:
            perm = np.random.default_rng(
                np.random.SeedSequence([config.train_seed, epoch])
            ).permutation(n)
            perm_epoch = epoch
        idx = perm[at * config.batch_size:(at + 1) * config.batch_size]
        panels = dataset.raster_batch(idx).astype(model.dtype) / 255.0
        scores, cache = model.score_batch(panels,
                                          source_blind=config.source_blind)
        loss, dscores = nn.cross_entropy_batch(scores, all_answers[idx])
        if not np.isfinite(loss):
            raise DivergedError(f"non-finite loss at step {step}")
        grads = model.backward(cache, dscores)
        opt.step(model.param_dict(), grads)
        losses.append(loss)
        done = step + 1
        if config.eval_count and config.eval_every_epochs and (
                done % (spe * config.eval_every_epochs) == 0
                or done == total_steps):
            evals.append(eval_point(done))
            if on_eval is not None:
                on_eval(evals[-1])
        if config.checkpoint_path and config.checkpoint_every and (
                done % config.checkpoint_every == 0):
            save_train_checkpoint(config.checkpoint_path, "visual", done,
                                  config, model, opt)
        if progress is not None:
            progress(step, loss)

    if config.checkpoint_path:
        save_train_checkpoint(config.checkpoint_path, "visual", total_steps,
                              config, model, opt)
    final_train = None
    final_eval_sets = None
    if config.eval_count:
        final_train = evaluate_visual(model, dataset,
                                      source_blind=config.source_blind,
                                      limit=config.eval_count).to_dict()
        final_eval_sets = {
            name: evaluate_visual(model, ds,
                                  source_blind=config.source_blind).to_dict()
            for name, ds in eval_sets}
    report = TrainReport(
        task="visual", regime=dataset.header["regime"], steps=total_steps,
        start_step=start_step, losses=losses, evals=evals,
        final_train=final_train, final_validation=None,
        data_seed=config.train_seed, init_seed=config.init_seed,
        wall_seconds=time.monotonic() - t0,
        final_eval_sets=final_eval_sets)
    return report
