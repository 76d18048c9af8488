"""Cross-entropy training with decoupled-weight-decay Adam, plus gradient
verification against central finite differences."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

import torch

from . import evaluation
from .batching import collate
from .checkpoint import save_checkpoint
from .errors import ConfigError, DataError, InternalError

#: parameter-name prefix/fragment -> reported gradient-check group
_GROUP_RULES = (
    ("encoder.tok_embed", "embeddings"),
    ("encoder.pos_embed", "embeddings"),
    (".attn.", "attention"),
    (".ln1.", "attention"),
    (".ffn.", "ffn"),
    (".ln2.", "ffn"),
    ("aligner.", "cnn_alignment"),
    ("semantics.label_embed", "label_embeddings"),
    ("semantics.fwd.", "gru"),
    ("semantics.bwd.", "gru"),
    ("semantics.proj", "projection"),
    ("cls_", "classifier"),
)

PARAM_GROUPS = tuple(dict.fromkeys(group for _, group in _GROUP_RULES))


def param_group(name: str) -> str:
    for fragment, group in _GROUP_RULES:
        if name.startswith(fragment) or fragment in name:
            return group
    raise InternalError(f"parameter {name!r} belongs to no gradient-check group")


@dataclass
class TrainConfig:
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    batch_size: int = 12
    max_length: int = 256
    epochs: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("moment decays must be in [0, 1)")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "max_length": self.max_length,
            "epochs": self.epochs,
            "seed": self.seed,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "clip_norm": self.clip_norm,
        }


def cross_entropy(probs, gold) -> float:
    """-log(probs[gold]) for one probability triple, or the mean over a
    batch of triples. Probabilities must be positive and sum to 1."""
    t = torch.as_tensor(probs, dtype=torch.float64)
    if t.dim() == 1:
        t = t[None, :]
        golds = torch.as_tensor([gold], dtype=torch.long)
    else:
        golds = torch.as_tensor(gold, dtype=torch.long)
    if bool((t <= 0).any()):
        raise DataError("probabilities must be positive")
    if bool((t.sum(dim=-1) - 1.0).abs().max() > 1e-6):
        raise DataError("probabilities must sum to 1")
    picked = t.gather(1, golds[:, None]).squeeze(1)
    return float((-picked.log()).mean())


def cross_entropy_from_logits(logits: torch.Tensor, golds: torch.Tensor) -> torch.Tensor:
    """Numerically stable batch-mean cross-entropy in log-sum-exp form."""
    lse = torch.logsumexp(logits, dim=-1)
    picked = logits.gather(1, golds[:, None]).squeeze(1)
    return (lse - picked).mean()


@dataclass
class AdamState:
    step: int
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]

    @classmethod
    def fresh(cls, params: dict[str, torch.Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={n: torch.zeros_like(p) for n, p in params.items()},
            v={n: torch.zeros_like(p) for n, p in params.items()},
        )


def adamw_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
    cfg: TrainConfig,
):
    """One decoupled-weight-decay Adam update, in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
    with bias-corrected moments. Decay skips 1-D parameters (biases and
    normalization gains/offsets).
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    with torch.no_grad():
        for name, p in params.items():
            if name not in grads:
                raise DataError(f"no gradient supplied for parameter {name!r}")
            g = grads[name]
            if g.shape != p.shape:
                raise DataError(
                    f"gradient shape {tuple(g.shape)} != parameter shape "
                    f"{tuple(p.shape)} for {name!r}"
                )
            m = state.m[name]
            v = state.v[name]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            update = (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon)
            if p.dim() >= 2:
                update = update + cfg.weight_decay * p
            p.sub_(cfg.learning_rate * update)
    return params, state


def batch_slices(n: int, batch_size: int) -> list[range]:
    """Index ranges covering n examples; the last partial batch is kept."""
    return [range(i, min(i + batch_size, n)) for i in range(0, n, batch_size)]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_f1: float
    wall_time: float

    def to_json_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "val_f1": self.val_f1,
            "wall_time": self.wall_time,
        }


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    checkpoint_path: str = ""

    def to_jsonl(self) -> str:
        import json

        lines = [json.dumps(r.to_json_dict()) for r in self.records]
        lines.append(json.dumps({"checkpoint": self.checkpoint_path}))
        return "\n".join(lines) + "\n"


def predict(model, examples, batch_size: int = 32) -> list[int]:
    """Argmax class ids for a list of encoded examples."""
    out: list[int] = []
    with torch.no_grad():
        for sl in batch_slices(len(examples), batch_size):
            batch = collate([examples[i] for i in sl])
            logits = model.forward_logits(batch, training=False)
            out.extend(int(i) for i in logits.argmax(dim=-1))
    return out


def _validation_metrics(model, examples, batch_size: int):
    preds = predict(model, examples, batch_size)
    golds = [e.gold for e in examples]
    cm = evaluation.confusion_from_ids(golds, preds)
    accuracy = evaluation.accuracy_from_confusion(cm)
    _, _, f1 = evaluation.weighted_prf_from_confusion(cm)
    return accuracy, f1


def train(model, train_examples, val_examples, cfg: TrainConfig, checkpoint_path) -> TrainLog:
    """Seeded epoch loop: shuffle, fixed-size batches (last partial kept),
    AdamW updates, per-epoch validation, best-val-F1 checkpointing."""
    train_examples = list(train_examples)
    val_examples = list(val_examples)
    if not train_examples:
        raise DataError("training set is empty")
    if not val_examples:
        raise DataError("validation set is empty")

    torch.manual_seed(cfg.seed)
    params = dict(model.named_parameters())
    state = AdamState.fresh(params)
    log = TrainLog(checkpoint_path=str(checkpoint_path))
    best_f1 = -1.0

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = list(range(len(train_examples)))
        random.Random(cfg.seed + 7919 * epoch).shuffle(order)
        total_loss = 0.0
        for sl in batch_slices(len(order), cfg.batch_size):
            batch = collate([train_examples[order[i]] for i in sl])
            logits = model.forward_logits(batch, training=True)
            loss = cross_entropy_from_logits(logits, batch.golds)
            for p in params.values():
                p.grad = None
            loss.backward()
            grads = {n: p.grad if p.grad is not None else torch.zeros_like(p) for n, p in params.items()}
            if cfg.clip_norm is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > cfg.clip_norm:
                    scale = cfg.clip_norm / norm
                    grads = {n: g * scale for n, g in grads.items()}
            adamw_step(params, grads, state, cfg)
            total_loss += float(loss.detach()) * len(sl)

        val_accuracy, val_f1 = _validation_metrics(model, val_examples, cfg.batch_size)
        if val_f1 > best_f1:
            best_f1 = val_f1
            save_checkpoint(checkpoint_path, model)
        log.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=total_loss / len(train_examples),
                val_accuracy=val_accuracy,
                val_f1=val_f1,
                wall_time=time.perf_counter() - started,
            )
        )
    return log


@dataclass
class GradCheckReport:
    group_errors: dict[str, float]
    tolerance: float
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "passed": self.passed,
            "group_errors": dict(self.group_errors),
        }


def grad_check(
    model,
    batch,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    analytic: dict[str, torch.Tensor] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    Per element, the error is |analytic - numeric| / max(|analytic|,
    |numeric|), falling back to the absolute difference when both are
    tiny; the report carries the max error per parameter group. `analytic`
    overrides the backward-pass gradients (used to verify the checker
    detects corrupted gradients).
    """

    def loss_value() -> float:
        with torch.no_grad():
            logits = model.forward_logits(batch, training=False)
            return float(cross_entropy_from_logits(logits, batch.golds))

    params = dict(model.named_parameters())
    if analytic is None:
        for p in params.values():
            p.grad = None
        loss = cross_entropy_from_logits(model.forward_logits(batch, training=False), batch.golds)
        loss.backward()
        analytic = {
            n: (p.grad.clone() if p.grad is not None else torch.zeros_like(p))
            for n, p in params.items()
        }

    group_errors = {group: 0.0 for group in PARAM_GROUPS}
    with torch.no_grad():
        for name, p in params.items():
            group = param_group(name)
            flat = p.view(-1)
            a_flat = analytic[name].view(-1)
            for i in range(flat.numel()):
                original = float(flat[i])
                flat[i] = original + step
                plus = loss_value()
                flat[i] = original - step
                minus = loss_value()
                flat[i] = original
                numeric = (plus - minus) / (2.0 * step)
                a = float(a_flat[i])
                denom = max(abs(a), abs(numeric))
                err = abs(a - numeric) if denom < 1e-8 else abs(a - numeric) / denom
                if err > group_errors[group]:
                    group_errors[group] = err

    worst = max(group_errors.values()) if group_errors else 0.0
    return GradCheckReport(
        group_errors=group_errors, tolerance=tolerance, passed=worst < tolerance
    )
