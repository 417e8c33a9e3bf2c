"""Joint training loop, evaluation and ablation runs."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape, backward
from .config import TrainConfig
from .data import Corpus, Sample
from .layers import ParamStore
from .metrics import EvalReport
from .model import Prepared, ProHAN

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


class Adam:
    """Adaptive-moment descent over a frozen store's flat buffers."""

    def __init__(self, params: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        if params.flat is None:
            params.freeze()
        self.params = params
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = np.zeros_like(params.flat)
        self.v = np.zeros_like(params.flat)
        self._buf = np.empty_like(params.flat)
        self.t = 0

    def step(self) -> None:
        self.t += 1
        g, m, v, buf = self.params.flat_grad, self.m, self.v, self._buf
        c1, c2 = 1 - self.b1 ** self.t, 1 - self.b2 ** self.t
        m *= self.b1
        np.multiply(g, 1 - self.b1, out=buf)
        m += buf
        v *= self.b2
        np.multiply(g, g, out=buf)
        buf *= 1 - self.b2
        v += buf
        np.multiply(v, 1.0 / c2, out=buf)
        np.sqrt(buf, out=buf)
        buf += self.eps
        np.divide(m, buf, out=buf)
        buf *= self.lr / c1
        self.params.flat -= buf


def clip_grad_norm(params: ParamStore, max_norm: float) -> float:
    g = params.flat_grad
    total = math.sqrt(float(np.dot(g, g)))
    if max_norm > 0 and total > max_norm:
        g *= max_norm / (total + 1e-12)
    return total


def train_step(model: ProHAN, prep: Prepared, opt: Adam, cfg: TrainConfig) -> float:
    model.params.zero_grad()
    with Tape():
        out = model.forward(prep, cfg.ablation, teacher_forcing=True)
    loss = float(out.loss.value)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss} on sample {prep.sample.tokens}")
    backward(out.loss)
    norm = clip_grad_norm(model.params, cfg.clip_norm)
    if not math.isfinite(norm):
        raise DivergenceError(f"non-finite gradient norm on sample {prep.sample.tokens}")
    opt.step()
    return loss


def predict_split(model: ProHAN, preps: list[Prepared], mode: str) -> list[dict]:
    rows = []
    for prep in preps:
        intent, slots = model.predict(prep, mode)
        rows.append({
            "tokens": prep.sample.tokens,
            "gold_intent": prep.sample.intent,
            "pred_intent": intent,
            "gold_slots": prep.sample.slots,
            "pred_slots": slots,
        })
    return rows


def evaluate_prepared(model: ProHAN, preps: list[Prepared], mode: str = "none") -> EvalReport:
    return EvalReport.from_predictions(predict_split(model, preps, mode))


def evaluate(model: ProHAN, samples: list[Sample], mode: str = "none") -> EvalReport:
    return evaluate_prepared(model, [model.prepare(s) for s in samples], mode)


def check_compatible(model: ProHAN, corpus: Corpus) -> None:
    if model.vocab != corpus.vocab:
        raise ValueError("checkpoint vocabulary does not match the corpus train split")
    if model.intents != corpus.intents or model.slot_tags != corpus.slot_tags:
        raise ValueError("checkpoint label inventories do not match the corpus")


@dataclass
class TrainResult:
    model: ProHAN
    best_epoch: int
    best_dev: EvalReport
    history: list[dict] = field(default_factory=list)
    checkpoint: dict | None = None

    def checkpoint_json(self) -> str:
        return json.dumps(self.checkpoint)


def train(corpus: Corpus, cfg: TrainConfig) -> TrainResult:
    """Per-sample Adam training; the dev-best checkpoint (overall accuracy, earliest on ties) is kept."""
    log.info("config %s", json.dumps(cfg.to_dict(), sort_keys=True))
    model = ProHAN.for_corpus(corpus, cfg.model, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    order_rng = np.random.default_rng(cfg.seed + 1)
    train_preps = [model.prepare(s) for s in corpus.train]
    dev_preps = [model.prepare(s) for s in corpus.dev]
    best_epoch, best_dev, best_state = -1, None, None
    history = []
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        losses = [train_step(model, train_preps[k], opt, cfg) for k in order_rng.permutation(len(train_preps))]
        dev = evaluate_prepared(model, dev_preps, cfg.ablation)
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "dev": dev.summary()}
        if cfg.eval_train:
            row["train"] = evaluate_prepared(model, train_preps, cfg.ablation).summary()
        row["seconds"] = time.perf_counter() - start
        history.append(row)
        log.info("epoch %d loss %.5f dev overall %.4f", epoch, row["loss"], dev.overall_acc)
        if best_dev is None or dev.overall_acc > best_dev.overall_acc:
            best_epoch, best_dev = epoch, dev
            best_state = model.checkpoint()
            stale = 0
        else:
            stale += 1
        if cfg.patience and stale >= cfg.patience:
            break
        if cfg.stop_when_perfect and dev.overall_acc == 1.0 and row.get("train", {}).get("overall_acc", 1.0) == 1.0:
            break
    model = ProHAN.from_checkpoint(best_state)
    best_state["extra"] = {"best_epoch": best_epoch, "ablation": cfg.ablation, "train_config": cfg.to_dict()}
    return TrainResult(model, best_epoch, best_dev, history, best_state)


def write_outputs(result: TrainResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoint.json").write_text(result.checkpoint_json(), encoding="utf-8")
    report = {"best_epoch": result.best_epoch, "dev": result.best_dev.to_dict(),
              "history": [{k: v for k, v in row.items() if k != "seconds"} for row in result.history]}
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True), encoding="utf-8")


def run_ablations(corpus: Corpus, base: TrainConfig, modes, seeds) -> dict[str, list[float]]:
    """Dev overall accuracy of the dev-best checkpoint for every (mode, seed)."""
    results: dict[str, list[float]] = {}
    for mode in modes:
        for seed in seeds:
            cfg = TrainConfig.from_dict({**base.to_dict(), "ablation": mode, "seed": seed})
            results.setdefault(mode, []).append(train(corpus, cfg).best_dev.overall_acc)
    return results
