"""Seeded random multi-objective hyperparameter search with Pareto reporting.

Each trial samples (learning rate log-uniform, Hopfield layer count, pooling
on/off, pooling head count), trains for the configured epochs, and records
four objectives: validation loss and forward FLOPs (minimized), validation
mAP and IoU@1 (maximized). The front is the standard non-dominated subset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelConfig, flops_estimate
from .train import TrainConfig, evaluate_model, train


@dataclass
class SearchSpace:
    lr_min: float = 1e-4
    lr_max: float = 1e-2
    num_hf_layers: tuple[int, ...] | None = None   # None -> 0..n_layers
    pool_num_heads: tuple[int, ...] = (1, 2, 4)

    def __post_init__(self):
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError("need 0 < lr_min <= lr_max")
        if not self.pool_num_heads:
            raise ValueError("pool_num_heads choices must be non-empty")


@dataclass
class TrialResult:
    trial_id: int
    lr: float
    num_hf_layers: int
    use_hopfield_pool: bool
    pool_num_heads: int
    val_loss: float
    flops: int
    map: float
    iou_at_1: float
    history: list[dict]

    def objectives(self) -> tuple[float, float, float, float]:
        return (self.val_loss, float(self.flops), self.map, self.iou_at_1)

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "lr": self.lr,
            "num_hf_layers": self.num_hf_layers,
            "use_hopfield_pool": self.use_hopfield_pool,
            "pool_num_heads": self.pool_num_heads,
            "val_loss": self.val_loss,
            "flops": self.flops,
            "map": self.map,
            "iou_at_1": self.iou_at_1,
        }


def dominates(a: TrialResult, b: TrialResult) -> bool:
    """True when a is at least as good on every objective and better on one.

    Loss and FLOPs are minimized; mAP and IoU@1 are maximized.
    """
    a_loss, a_flops, a_map, a_iou = a.objectives()
    b_loss, b_flops, b_map, b_iou = b.objectives()
    no_worse = (a_loss <= b_loss and a_flops <= b_flops
                and a_map >= b_map and a_iou >= b_iou)
    strictly = (a_loss < b_loss or a_flops < b_flops
                or a_map > b_map or a_iou > b_iou)
    return no_worse and strictly


@dataclass
class ParetoFront:
    members: list[TrialResult]

    def selected(self) -> TrialResult:
        """The reported trial: the front member with minimal validation loss."""
        return min(self.members, key=lambda t: (t.val_loss, t.trial_id))

    def member_ids(self) -> list[int]:
        return [t.trial_id for t in self.members]


def pareto_front(trials: list[TrialResult]) -> ParetoFront:
    """Non-dominance filter; identical objective vectors are all retained."""
    if not trials:
        raise ValueError("pareto_front needs at least one trial")
    members = [t for t in trials
               if not any(dominates(other, t) for other in trials if other is not t)]
    return ParetoFront(members=members)


def sample_trial_params(rng: np.random.Generator, base_cfg: ModelConfig,
                        space: SearchSpace) -> dict:
    choices = (space.num_hf_layers if space.num_hf_layers is not None
               else tuple(range(base_cfg.n_layers + 1)))
    return {
        "lr": float(math.exp(rng.uniform(math.log(space.lr_min), math.log(space.lr_max)))),
        "num_hf_layers": int(rng.choice(choices)),
        "use_hopfield_pool": bool(rng.integers(2)),
        "pool_num_heads": int(rng.choice(space.pool_num_heads)),
    }


def search(base_model_cfg: ModelConfig, base_train_cfg: TrainConfig,
           space: SearchSpace, train_samples, val_samples,
           n_trials: int = 10, seed: int = 0
           ) -> tuple[list[TrialResult], ParetoFront]:
    """Run n_trials seeded random trials and extract the Pareto front.

    Objectives are measured on the validation split; FLOPs are the analytic
    forward count at the model's max_len (the padded training length).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    trials = []
    for trial_id in range(n_trials):
        params = sample_trial_params(rng, base_model_cfg, space)
        trial_seed = int(rng.integers(2 ** 31))
        model_cfg = replace(base_model_cfg,
                            num_hf_layers=params["num_hf_layers"],
                            use_hopfield_pool=params["use_hopfield_pool"],
                            pool_num_heads=params["pool_num_heads"],
                            seed=trial_seed)
        train_cfg = replace(base_train_cfg, lr=params["lr"], seed=trial_seed,
                            checkpoint_path=None)
        result = train(model_cfg, train_cfg, train_samples, val_samples)
        report, _ = evaluate_model(result.model, result.vocab, val_samples)
        est = flops_estimate(result.model.cfg, result.model.cfg.max_len)
        trials.append(TrialResult(
            trial_id=trial_id,
            lr=params["lr"],
            num_hf_layers=params["num_hf_layers"],
            use_hopfield_pool=params["use_hopfield_pool"],
            pool_num_heads=params["pool_num_heads"],
            val_loss=result.best_val_loss,
            flops=est.forward_flops,
            map=report.map,
            iou_at_1=report.iou_at_k[1],
            history=result.history,
        ))
    return trials, pareto_front(trials)
