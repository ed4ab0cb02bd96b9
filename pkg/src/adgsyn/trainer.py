"""Adam with step decay, the mixed-precision step protocol and the k-fold loop."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .amp import LossScaler, scaled_backward
from .config import RunConfig, TrainConfig
from .data import ExpressionScaler, GraphCache, DatasetSplit, iter_batches, label_counts, make_batch, make_folds
from .head import hybrid_loss
from .metrics import EpochTimer, MetricsReport, aggregate_reports, write_json
from .model import ADGSyn, save_model
from .tensor import AMP_POLICY, FULL_PRECISION, MemoryLedger, Parameter, Tape, Tensor, autocast

log = logging.getLogger(__name__)


class Adam:
    """Adam on Single32 masters. Half16 shadows are refreshed after every update."""

    def __init__(self, params, lr=5e-4, betas=(0.9, 0.999), eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params: list[Parameter] = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data, dtype=np.float32) for p in self.params]
        self.v = [np.zeros_like(p.data, dtype=np.float32) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = np.float32(self.beta1), np.float32(self.beta2)
        c1 = np.float32(1 - self.beta1 ** t)
        c2 = np.float32(1 - self.beta2 ** t)
        lr, eps = np.float32(self.lr), np.float32(self.eps)
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float32, copy=False)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
            p.refresh_shadow()

    def state_dict(self):
        return {"step": self.step_count, "lr": self.lr, "betas": [self.beta1, self.beta2], "eps": self.eps}


def lr_at(epoch: int, base_lr: float, gamma: float = 0.7, step_size: int = 100) -> float:
    """Step decay: base_lr * gamma ** floor(epoch / step_size), epochs counted from 0."""
    return base_lr * gamma ** (epoch // step_size)


@dataclass
class StepResult:
    loss: float
    grads_valid: bool
    scale: float
    correct: int = 0


def train_step(model: ADGSyn, batch, optimizer: Adam, scaler: LossScaler, policy, mse_weight=0.1) -> StepResult:
    """Forward under ``policy``, Single32 hybrid loss, scaled backward, guarded update.

    The update is skipped when any gradient is non-finite; the scaler is
    updated either way.
    """
    model.train()
    optimizer.zero_grad()
    with Tape() as tape, autocast(policy):
        out = model(batch)
        loss = hybrid_loss(out.logits, batch.labels, mse_weight)
    scale = scaler.scale if scaler.enabled else 1.0
    valid = scaled_backward(tape, loss, scaler)
    if valid:
        optimizer.step()
    scaler.update(valid)
    tape.reset()
    correct = int(((out.prob >= 0.5).astype(np.int64) == batch.labels).sum())
    return StepResult(float(loss.data.reshape(-1)[0]), valid, scale, correct)


def predict_outputs(model: ADGSyn, triplets, graphs: GraphCache, profiles, batch_size=128, policy=None):
    """``(probs, logits)`` per triplet with the model in eval mode."""
    model.eval()
    probs, logits = [], []
    with autocast(policy):
        for idx in iter_batches(triplets, batch_size):
            out = model(make_batch([triplets[i] for i in idx], graphs, profiles))
            probs.append(out.prob)
            logits.append(out.logits.numpy())
    model.train()
    if not probs:
        return np.zeros(0, dtype=np.float32), np.zeros((0, 2), dtype=np.float32)
    return np.concatenate(probs), np.concatenate(logits)


def predict_probs(model: ADGSyn, triplets, graphs: GraphCache, profiles, batch_size=128, policy=None) -> np.ndarray:
    return predict_outputs(model, triplets, graphs, profiles, batch_size, policy)[0]


def evaluate(model, triplets, graphs, profiles, batch_size=128, policy=None, threshold=0.5) -> MetricsReport:
    probs = predict_probs(model, triplets, graphs, profiles, batch_size, policy)
    return MetricsReport.from_predictions(probs, [t.label for t in triplets], threshold)


def _evaluate_with_loss(model, triplets, graphs, profiles, cfg: TrainConfig, policy):
    probs, logits = predict_outputs(model, triplets, graphs, profiles, cfg.batch_size, policy)
    labels = [t.label for t in triplets]
    loss = float(hybrid_loss(Tensor(logits), labels, cfg.mse_weight).data.reshape(-1)[0])
    return MetricsReport.from_predictions(probs, labels, cfg.threshold), loss


def fold_seeds(seed: int, fold: int) -> tuple[int, np.random.Generator]:
    """Model-init seed and batch-order generator for one fold, both derived from (seed, fold)."""
    ss = np.random.SeedSequence([seed, fold])
    init, order = ss.spawn(2)
    return int(init.generate_state(1)[0]), np.random.default_rng(order)


def make_scaler(cfg: TrainConfig) -> LossScaler:
    return LossScaler(scale=cfg.init_scale, growth_interval=cfg.growth_interval, enabled=cfg.amp)


@dataclass
class FoldResult:
    fold: int
    test: MetricsReport
    best_epoch: int
    best_val_auroc: float | None
    train_acc: float
    timer: EpochTimer
    history: list = field(default_factory=list)
    label_counts: dict = field(default_factory=dict)
    checkpoint: str | None = None

    def as_dict(self) -> dict:
        return {"fold": self.fold, "test": self.test.as_dict(), "best_epoch": self.best_epoch,
                "best_val_auroc": self.best_val_auroc, "train_acc": self.train_acc,
                "label_counts": self.label_counts, "checkpoint": self.checkpoint, "history": self.history}


def fit_fold(run: RunConfig, triplets, raw_expression, split: DatasetSplit, fold: int,
             graphs: GraphCache | None = None, out_dir=None, monitor_train=False) -> FoldResult:
    """Train one rotation of ``split`` and score its test partition with the best-by-val-AUROC weights."""
    cfg = run.train
    graphs = graphs or GraphCache()
    train_idx, val_idx, test_idx = split.rotation(fold)
    train = [triplets[i] for i in train_idx]
    val = [triplets[i] for i in val_idx]
    test = [triplets[i] for i in test_idx]
    counts = {"train": label_counts(triplets, train_idx), "val": label_counts(triplets, val_idx),
              "test": label_counts(triplets, test_idx)}
    # standardization statistics come from training cell lines only
    scaler_x = ExpressionScaler().fit(raw_expression, [t.cell_line for t in train])
    profiles = scaler_x.transform(raw_expression)

    init_seed, order_rng = fold_seeds(cfg.seed, fold)
    model = ADGSyn(run.model, seed=init_seed)
    optimizer = Adam(model.parameters(), cfg.lr, (cfg.beta1, cfg.beta2), cfg.adam_eps)
    loss_scaler = make_scaler(cfg)
    policy = AMP_POLICY if cfg.amp else FULL_PRECISION
    timer = EpochTimer()
    history = []
    best = ((-np.inf, -np.inf), -1, model.state_dict())
    for epoch in range(cfg.epochs):
        optimizer.lr = lr_at(epoch, cfg.lr, cfg.lr_gamma, cfg.lr_step)
        losses, skipped, correct = [], 0, 0
        with timer:
            for idx in iter_batches(train, cfg.batch_size, order_rng):
                batch = make_batch([train[i] for i in idx], graphs, profiles)
                res = train_step(model, batch, optimizer, loss_scaler, policy, cfg.mse_weight)
                losses.append(res.loss)
                skipped += not res.grads_valid
                correct += res.correct
        val_report, val_loss = _evaluate_with_loss(model, val, graphs, profiles, cfg, policy)
        # highest validation AUROC; lower validation loss breaks ties
        score = (-np.inf if val_report.auroc is None else val_report.auroc, -val_loss)
        if score > best[0]:
            best = (score, epoch, model.state_dict())
        row = {"epoch": epoch, "lr": optimizer.lr, "loss": float(np.mean(losses)), "skipped": skipped,
               "loss_scale": loss_scaler.scale, "batch_acc": correct / len(train),
               "val_auroc": val_report.auroc, "val_loss": val_loss, "seconds": timer.times[-1]}
        if monitor_train:
            row["train_acc"] = evaluate(model, train, graphs, profiles, cfg.batch_size, policy).acc
        history.append(row)
        log.debug("fold %d epoch %d loss %.4f val_auroc %s", fold, epoch, row["loss"], val_report.auroc)

    (best_auroc, _), best_epoch, state = best
    model.load_state_dict(state)
    test_report = evaluate(model, test, graphs, profiles, cfg.batch_size, policy, cfg.threshold)
    train_acc = evaluate(model, train, graphs, profiles, cfg.batch_size, policy, cfg.threshold).acc
    ckpt = None
    if out_dir is not None:
        path = Path(out_dir) / f"fold{fold}.ckpt"
        save_model(model, path, {"fold": fold, "epoch": best_epoch,
                                 "expression_mean": scaler_x.mean_.tolist(),
                                 "expression_std": scaler_x.std_.tolist()})
        ckpt = str(path)
    return FoldResult(fold, test_report, best_epoch, None if best_auroc == -np.inf else float(best_auroc),
                      train_acc, timer, history, counts, ckpt)


@dataclass
class FitResult:
    folds: list
    aggregate: dict
    partial: bool = False

    def metrics_dict(self) -> dict:
        return {"partial": self.partial, "folds": [f.as_dict() for f in self.folds], "aggregate": self.aggregate}

    def timings_dict(self) -> dict:
        return {"folds": [{"fold": f.fold, **f.timer.summary()} for f in self.folds]}


def _flush(result: FitResult, out_dir):
    if out_dir is None:
        return
    write_json(result.metrics_dict(), Path(out_dir) / "metrics.json")
    write_json(result.timings_dict(), Path(out_dir) / "timings.json")


def fit(run: RunConfig, triplets, raw_expression, out_dir=None, graphs: GraphCache | None = None,
        split: DatasetSplit | None = None, monitor_train=False) -> FitResult:
    """Train ``run.train.folds`` rotations and aggregate their test reports.

    With ``out_dir`` the run directory receives config.json, per-fold
    checkpoints, metrics.json and timings.json. Results gathered so far are
    flushed (marked partial) if training is interrupted.
    """
    cfg = run.train
    graphs = graphs or GraphCache()
    split = split or make_folds(triplets, cfg.seed, cfg.n_partitions, cfg.split_unit)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        run.save(Path(out_dir) / "config.json")
    done: list[FoldResult] = []

    def one(k):
        return fit_fold(run, triplets, raw_expression, split, k, graphs, out_dir, monitor_train)

    try:
        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                for res in pool.map(one, range(cfg.folds)):
                    done.append(res)
        else:
            for k in range(cfg.folds):
                done.append(one(k))
    except BaseException:
        _flush(FitResult(done, aggregate_reports([f.test for f in done]), partial=True), out_dir)
        raise
    result = FitResult(done, aggregate_reports([f.test for f in done]))
    _flush(result, out_dir)
    return result


def profile_step(run: RunConfig, triplets, profiles, graphs: GraphCache | None = None) -> dict:
    """Peak activation bytes of one training step on the first ``batch_size`` triplets."""
    graphs = graphs or GraphCache()
    batch = make_batch(triplets[:run.train.batch_size], graphs, profiles)
    model = ADGSyn(run.model, seed=run.train.seed)
    optimizer = Adam(model.parameters(), run.train.lr)
    scaler = make_scaler(run.train)
    policy = AMP_POLICY if run.train.amp else FULL_PRECISION
    with MemoryLedger() as ledger:
        train_step(model, batch, optimizer, scaler, policy, run.train.mse_weight)
    return ledger.as_dict()
