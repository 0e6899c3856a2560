"""Training loop and evaluation drivers.

One training run is single threaded and fully deterministic under its seed:
seeded shuffling into fixed-size minibatches, forward, mean soft cross
entropy, backward, Adam. The best-validation-loss epoch is checkpointed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import labels as lb
from .autodiff import Tensor, add, log, mul, neg, softmax_rows
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import Vocab, build_vocab, preprocess, tokenize
from .metrics import DEFAULT_KS, MetricsReport, PredictionRecord, compute_report
from .model import Model, ModelConfig, build, forward
from .optim import Adam

EVAL_MODES = ("multiclass", "multilabel", "both")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the epoch/step diagnostic."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    checkpoint_path: str | None = None
    eps: float = lb.DEFAULT_LOSS_EPS

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


@dataclass
class EncodedDataset:
    ids: np.ndarray          # [n, max_len] int64
    mask: np.ndarray         # [n, max_len] bool
    soft_targets: np.ndarray  # [n, 6] float64
    sample_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.ids.shape[0]


def encode_dataset(samples, vocab: Vocab, max_len: int) -> EncodedDataset:
    """Preprocess, tokenize and aggregate soft labels for a sample list."""
    if not samples:
        raise ValueError("cannot encode an empty dataset")
    ids = np.zeros((len(samples), max_len), dtype=np.int64)
    mask = np.zeros((len(samples), max_len), dtype=bool)
    soft = np.zeros((len(samples), lb.N_CLASSES))
    names = []
    for i, s in enumerate(samples):
        ids[i], mask[i] = tokenize(preprocess(s.text), vocab, max_len)
        soft[i] = lb.soft_label(s.annotations).probs
        names.append(s.id)
    return EncodedDataset(ids=ids, mask=mask, soft_targets=soft, sample_ids=names)


def batch_cross_entropy(logits: Tensor, soft_targets: np.ndarray, eps: float) -> Tensor:
    """Differentiable mean of -sum_c p_c log(eps + softmax(logits)_c)."""
    probs = softmax_rows(logits, beta=1.0)
    log_probs = log(add(probs, Tensor(np.full((), eps))))
    per_sample = neg(mul(Tensor(soft_targets), log_probs).sum(axis=-1))
    return per_sample.mean()


def dataset_loss(model: Model, data: EncodedDataset, batch_size: int, eps: float) -> float:
    """Sample-weighted mean loss over the dataset in deterministic batches."""
    total = 0.0
    for start in range(0, len(data), batch_size):
        end = min(start + batch_size, len(data))
        logits = forward(model, data.ids[start:end], data.mask[start:end])
        loss = batch_cross_entropy(logits, data.soft_targets[start:end], eps)
        total += loss.item() * (end - start)
    return total / len(data)


@dataclass
class TrainResult:
    history: list[dict]
    best_val_loss: float
    best_epoch: int
    model: Model
    vocab: Vocab
    checkpoint_path: str | None


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.named_parameters().items()}


def _restore(model: Model, snap: dict[str, np.ndarray]) -> None:
    for name, t in model.named_parameters().items():
        t.data = snap[name].copy()


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_samples,
          val_samples, vocab: Vocab | None = None) -> TrainResult:
    """Train on soft labels; returns history plus the best-validation model.

    The vocabulary is built from the training texts when not supplied
    (capped at model_cfg.vocab_size); the model is then built with the
    actual vocab length.
    """
    if not train_samples or not val_samples:
        raise ValueError("train and validation splits must be non-empty")
    if vocab is None:
        vocab = build_vocab((preprocess(s.text) for s in train_samples),
                            max_size=model_cfg.vocab_size)
    cfg_dict = model_cfg.to_dict()
    cfg_dict["vocab_size"] = len(vocab)
    model_cfg = ModelConfig.from_dict(cfg_dict)
    model = build(model_cfg)

    train_data = encode_dataset(train_samples, vocab, model_cfg.max_len)
    val_data = encode_dataset(val_samples, vocab, model_cfg.max_len)

    optimizer = Adam(model.parameters(), lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    history = []
    best_val = float("inf")
    best_epoch = -1
    best_params = _snapshot(model)

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(train_data))
        running = 0.0
        for step, start in enumerate(range(0, len(train_data), train_cfg.batch_size)):
            batch = order[start:start + train_cfg.batch_size]
            try:
                logits = forward(model, train_data.ids[batch], train_data.mask[batch])
                loss = batch_cross_entropy(logits, train_data.soft_targets[batch],
                                           train_cfg.eps)
                loss_val = loss.item()
                optimizer.zero_grad()
                loss.backward()
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {step} "
                    f"(lr={train_cfg.lr}): {exc}") from exc
            optimizer.step()
            running += loss_val * len(batch)
        train_loss = running / len(train_data)
        val_loss = dataset_loss(model, val_data, train_cfg.batch_size, train_cfg.eps)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = _snapshot(model)

    _restore(model, best_params)
    if train_cfg.checkpoint_path:
        save_checkpoint(train_cfg.checkpoint_path, model, vocab_tokens=vocab.tokens,
                        meta={"best_val_loss": best_val, "best_epoch": best_epoch,
                              "train_config": {"lr": train_cfg.lr,
                                               "batch_size": train_cfg.batch_size,
                                               "epochs": train_cfg.epochs,
                                               "seed": train_cfg.seed,
                                               "eps": train_cfg.eps}})
    return TrainResult(history=history, best_val_loss=best_val, best_epoch=best_epoch,
                       model=model, vocab=vocab, checkpoint_path=train_cfg.checkpoint_path)


# -- inference and evaluation --------------------------------------------------------


def predict_probs(model: Model, data_ids: np.ndarray, data_mask: np.ndarray,
                  batch_size: int = 32) -> np.ndarray:
    """Softmax class probabilities for encoded inputs, in input order."""
    out = np.zeros((data_ids.shape[0], lb.N_CLASSES))
    for start in range(0, data_ids.shape[0], batch_size):
        end = min(start + batch_size, data_ids.shape[0])
        logits = forward(model, data_ids[start:end], data_mask[start:end])
        out[start:end] = softmax_rows(logits, beta=1.0).data
    return out


def build_records(sample_ids, probs: np.ndarray, soft_targets: np.ndarray,
                  ks=DEFAULT_KS) -> list[PredictionRecord]:
    """Pair predictions with targets derived from the soft labels."""
    records = []
    for name, p, soft in zip(sample_ids, probs, soft_targets):
        records.append(PredictionRecord(
            sample_id=name,
            probs=p,
            target=lb.multiclass_target(soft),
            multilabel_targets={k: lb.multilabel_target(soft, k).classes for k in ks},
        ))
    return records


def evaluate_model(model: Model, vocab: Vocab, samples, ks=DEFAULT_KS,
                   mode: str = "both", batch_size: int = 32,
                   eps: float = lb.DEFAULT_LOSS_EPS) -> tuple[MetricsReport, dict]:
    """Forward the dataset and reduce the full metric suite.

    mode selects the reported families: "multiclass" (top-k accuracy),
    "multilabel" (F1@k, IoU@k) or "both"; AP/mAP are always included.
    Returns (report, extras) with extras holding mean loss and counts.
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"mode must be one of {EVAL_MODES}, got {mode!r}")
    if not samples:
        raise ValueError("cannot evaluate an empty dataset")
    data = encode_dataset(samples, vocab, model.cfg.max_len)
    probs = predict_probs(model, data.ids, data.mask, batch_size)
    records = build_records(data.sample_ids, probs, data.soft_targets, ks)
    families = ("multiclass", "multilabel") if mode == "both" else (mode,)
    report = compute_report(records, ks=ks, families=families)
    extras = {
        "n_samples": len(samples),
        "mean_loss": dataset_loss(model, data, batch_size, eps),
        "mode": mode,
    }
    return report, extras


def evaluate_checkpoint(path, samples, ks=DEFAULT_KS, mode: str = "both",
                        batch_size: int = 32) -> tuple[MetricsReport, dict]:
    """Load a checkpoint (with its stored vocab) and evaluate a labeled dataset."""
    model, header = load_checkpoint(path)
    if "vocab" not in header:
        raise CheckpointError("checkpoint has no stored vocabulary")
    vocab = Vocab(tokens=list(header["vocab"]))
    report, extras = evaluate_model(model, vocab, samples, ks=ks, mode=mode,
                                    batch_size=batch_size)
    extras["checkpoint_meta"] = header.get("meta", {})
    return report, extras


def score_texts(model: Model, vocab: Vocab, texts, batch_size: int = 32) -> np.ndarray:
    """Class probabilities for raw texts (preprocess + tokenize + forward)."""
    if not texts:
        raise ValueError("no texts to score")
    ids = np.zeros((len(texts), model.cfg.max_len), dtype=np.int64)
    mask = np.zeros((len(texts), model.cfg.max_len), dtype=bool)
    for i, text in enumerate(texts):
        ids[i], mask[i] = tokenize(preprocess(text), vocab, model.cfg.max_len)
    return predict_probs(model, ids, mask, batch_size)
