"""Multiple-instance survival network over bags of tumor feature vectors.

Each patient is a bag of per-tumor feature rows. An autoencoder
(d -> 64 -> 32 -> 64 -> d, rectified hidden layers, identity outputs)
compresses every tumor; a regressor head (32 -> 16 -> 1) scores each tumor
from its bottleneck code; a pooling rule collapses tumor scores into one
patient hazard. Training jointly minimizes per-bag reconstruction error and
the Cox partial likelihood of the pooled hazards, blended by a schedule that
moves linearly from pure reconstruction at the first epoch to pure Cox at
the last.

Everything is plain numpy with hand-written backpropagation; training is
full batch per epoch over a censoring-balanced subsample and deterministic
for a fixed seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

POOLINGS = ("mean", "largest", "max", "lse")

ENCODER_HIDDEN = 64
CODE_WIDTH = 32
REGRESSOR_HIDDEN = 16

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_WEIGHT_KEYS = ("w1", "w2", "w3", "w4", "w5", "w6")
_BIAS_KEYS = ("b1", "b2", "b3", "b4", "b5", "b6")


@dataclass(frozen=True)
class TumorFeatureBag:
    """All tumors of one patient in one contrast phase."""

    patient_id: str
    features: np.ndarray  # (T, d) normalized feature rows
    volumes: np.ndarray  # (T,) tumor volumes in mm^3
    phase: str = "post"

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("bag needs a (T, d) matrix with T >= 1")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("bag features must be finite")
        if self.volumes.shape != (self.features.shape[0],):
            raise ValueError("one volume per tumor required")


@dataclass(frozen=True)
class SurvivalLabel:
    time: float  # months
    event: bool  # True = death observed, False = right-censored

    def __post_init__(self):
        if not (np.isfinite(self.time) and self.time > 0):
            raise ValueError("survival time must be finite and positive")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    learning_rate: float = 4e-4
    weight_decay: float = 1e-3
    pooling: str = "lse"
    dropout: float = 0.2
    balanced_sampling: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


def init_params(input_dim: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Symmetric uniform fan-in initialization, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [
        (input_dim, ENCODER_HIDDEN),
        (ENCODER_HIDDEN, CODE_WIDTH),
        (CODE_WIDTH, ENCODER_HIDDEN),
        (ENCODER_HIDDEN, input_dim),
        (CODE_WIDTH, REGRESSOR_HIDDEN),
        (REGRESSOR_HIDDEN, 1),
    ]
    params: dict[str, np.ndarray] = {}
    for key, bkey, (fan_in, fan_out) in zip(_WEIGHT_KEYS, _BIAS_KEYS, dims):
        bound = 1.0 / np.sqrt(fan_in)
        params[key] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[bkey] = np.zeros(fan_out)
    return params


def _unit_masks(features: np.ndarray) -> dict[str, np.ndarray]:
    t = features.shape[0]
    return {
        "m1": np.ones((t, ENCODER_HIDDEN)),
        "m2": np.ones((t, CODE_WIDTH)),
        "m3": np.ones((t, ENCODER_HIDDEN)),
        "m5": np.ones((t, REGRESSOR_HIDDEN)),
    }


def dropout_masks(
    features: np.ndarray, rate: float, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Inverted-dropout masks for the four hidden layers of one bag."""
    masks = _unit_masks(features)
    if rate > 0:
        keep = 1.0 - rate
        for key in masks:
            masks[key] = (rng.random(masks[key].shape) >= rate) / keep
    return masks


@dataclass
class BagForward:
    """Intermediates of one bag's forward pass, kept for backprop."""

    x: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    pre2: np.ndarray
    code: np.ndarray
    pre3: np.ndarray
    h3: np.ndarray
    recon: np.ndarray
    pre5: np.ndarray
    r1: np.ndarray
    scores: np.ndarray
    masks: dict[str, np.ndarray]


def forward(
    bag: TumorFeatureBag,
    params: dict[str, np.ndarray],
    masks: dict[str, np.ndarray] | None = None,
) -> BagForward:
    """Score and reconstruct every tumor of a bag.

    `masks` are dropout masks; omit them for inference.
    """
    x = bag.features
    m = masks or _unit_masks(x)
    pre1 = x @ params["w1"] + params["b1"]
    h1 = np.maximum(pre1, 0.0) * m["m1"]
    pre2 = h1 @ params["w2"] + params["b2"]
    code = np.maximum(pre2, 0.0) * m["m2"]
    pre3 = code @ params["w3"] + params["b3"]
    h3 = np.maximum(pre3, 0.0) * m["m3"]
    recon = h3 @ params["w4"] + params["b4"]
    pre5 = code @ params["w5"] + params["b5"]
    r1 = np.maximum(pre5, 0.0) * m["m5"]
    scores = (r1 @ params["w6"] + params["b6"])[:, 0]
    return BagForward(x, pre1, h1, pre2, code, pre3, h3, recon, pre5, r1, scores, m)


def pool(scores: np.ndarray, kind: str, volumes: np.ndarray | None = None) -> float:
    """Collapse per-tumor scores into one patient hazard."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 1:
        raise ValueError("pooling needs at least one score")
    if kind == "mean":
        return float(scores.mean())
    if kind == "max":
        return float(scores.max())
    if kind == "largest":
        if volumes is None:
            raise ValueError("largest pooling needs tumor volumes")
        return float(scores[int(np.argmax(volumes))])
    if kind == "lse":
        m = float(scores.max())
        return m + float(np.log(np.exp(scores - m).sum()))
    raise ValueError(f"unknown pooling {kind!r}")


def pool_gradient(
    scores: np.ndarray, kind: str, volumes: np.ndarray | None = None
) -> np.ndarray:
    """d(pooled hazard) / d(scores); lse's gradient is the softmax."""
    scores = np.asarray(scores, dtype=np.float64)
    t = scores.size
    if kind == "mean":
        return np.full(t, 1.0 / t)
    g = np.zeros(t)
    if kind == "max":
        g[int(np.argmax(scores))] = 1.0
    elif kind == "largest":
        if volumes is None:
            raise ValueError("largest pooling needs tumor volumes")
        g[int(np.argmax(volumes))] = 1.0
    elif kind == "lse":
        shifted = np.exp(scores - scores.max())
        return shifted / shifted.sum()
    else:
        raise ValueError(f"unknown pooling {kind!r}")
    return g


def mse_loss(features: np.ndarray, recon: np.ndarray) -> float:
    """Mean over tumors of the squared Euclidean reconstruction error."""
    if features.shape != recon.shape:
        raise ValueError("feature/reconstruction shape mismatch")
    return float(((features - recon) ** 2).sum(axis=1).mean())


@dataclass(frozen=True)
class CoxLoss:
    value: float
    n_events: int

    @property
    def no_events(self) -> bool:
        return self.n_events == 0


def coxph_loss(hazards: np.ndarray, labels: Sequence[SurvivalLabel]) -> CoxLoss:
    """Negative Cox partial log likelihood of the pooled hazards.

    Risk sets include every patient with time >= the event time (ties stay
    in; Breslow). No events yields 0, flagged via n_events.
    """
    hazards = np.asarray(hazards, dtype=np.float64)
    times = np.array([lab.time for lab in labels])
    events = np.array([lab.event for lab in labels], dtype=bool)
    if hazards.shape != times.shape:
        raise ValueError("one hazard per patient required")
    if not events.any():
        return CoxLoss(0.0, 0)
    value = 0.0
    for p in np.flatnonzero(events):
        at_risk = hazards[times >= times[p]]
        m = at_risk.max()
        value -= hazards[p] - (m + np.log(np.exp(at_risk - m).sum()))
    return CoxLoss(float(value), int(events.sum()))


def _cox_hazard_gradient(hazards: np.ndarray, times: np.ndarray, events: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(hazards)
    for p in np.flatnonzero(events):
        risk = times >= times[p]
        shifted = np.exp(hazards[risk] - hazards[risk].max())
        grad[risk] += shifted / shifted.sum()
        grad[p] -= 1.0
    return grad


def blend_alpha(epoch: int, total_epochs: int) -> float:
    """Cox weight at `epoch`: e / (E - 1), spanning [0, 1] inclusive."""
    if total_epochs < 2:
        raise ValueError("schedule needs at least 2 epochs")
    if not 0 <= epoch <= total_epochs - 1:
        raise ValueError("epoch out of range")
    return epoch / (total_epochs - 1)


def total_loss(mse: float, cox: float, epoch: int, total_epochs: int) -> float:
    alpha = blend_alpha(epoch, total_epochs)
    return (1.0 - alpha) * mse + alpha * cox


def _zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _backward_bag(
    params: dict[str, np.ndarray],
    cache: BagForward,
    d_recon: np.ndarray,
    d_scores: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate parameter gradients for one bag given output seeds."""
    m = cache.masks
    # reconstruction head
    grads["w4"] += cache.h3.T @ d_recon
    grads["b4"] += d_recon.sum(axis=0)
    d_pre3 = (d_recon @ params["w4"].T) * m["m3"] * (cache.pre3 > 0)
    grads["w3"] += cache.code.T @ d_pre3
    grads["b3"] += d_pre3.sum(axis=0)
    d_code = d_pre3 @ params["w3"].T
    # regressor head
    d_out = d_scores[:, None]
    grads["w6"] += cache.r1.T @ d_out
    grads["b6"] += d_out.sum(axis=0)
    d_pre5 = (d_out @ params["w6"].T) * m["m5"] * (cache.pre5 > 0)
    grads["w5"] += cache.code.T @ d_pre5
    grads["b5"] += d_pre5.sum(axis=0)
    d_code += d_pre5 @ params["w5"].T
    # shared encoder
    d_pre2 = d_code * m["m2"] * (cache.pre2 > 0)
    grads["w2"] += cache.h1.T @ d_pre2
    grads["b2"] += d_pre2.sum(axis=0)
    d_pre1 = (d_pre2 @ params["w2"].T) * m["m1"] * (cache.pre1 > 0)
    grads["w1"] += cache.x.T @ d_pre1
    grads["b1"] += d_pre1.sum(axis=0)


def loss_and_gradients(
    params: dict[str, np.ndarray],
    bags: Sequence[TumorFeatureBag],
    labels: Sequence[SurvivalLabel],
    alpha: float,
    pooling: str,
    masks: Sequence[dict[str, np.ndarray]] | None = None,
) -> tuple[float, float, float, dict[str, np.ndarray]]:
    """Full-batch loss (total, mse, cox) and exact analytic gradients.

    The batch reconstruction term is the mean of the per-bag losses; the Cox
    term is the partial likelihood over all patients in the batch.
    """
    n = len(bags)
    caches = [
        forward(bag, params, masks[i] if masks is not None else None)
        for i, bag in enumerate(bags)
    ]
    hazards = np.array(
        [pool(c.scores, pooling, bag.volumes) for c, bag in zip(caches, bags)]
    )
    mse = float(np.mean([mse_loss(c.x, c.recon) for c in caches]))
    cox = coxph_loss(hazards, labels)

    times = np.array([lab.time for lab in labels])
    events = np.array([lab.event for lab in labels], dtype=bool)
    d_hazard = alpha * _cox_hazard_gradient(hazards, times, events)

    grads = _zero_grads(params)
    for i, (cache, bag) in enumerate(zip(caches, bags)):
        t = cache.x.shape[0]
        d_recon = (1.0 - alpha) / n * (2.0 / t) * (cache.recon - cache.x)
        d_scores = d_hazard[i] * pool_gradient(cache.scores, pooling, bag.volumes)
        _backward_bag(params, cache, d_recon, d_scores, grads)

    total = (1.0 - alpha) * mse + alpha * cox.value
    return total, mse, cox.value, grads


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict[str, float]]
    config: TrainConfig


def _balanced_sample(
    events: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Indices with the majority censoring class subsampled to the minority."""
    pos = np.flatnonzero(events)
    neg = np.flatnonzero(~events)
    if pos.size == 0 or neg.size == 0:
        return np.arange(events.size)
    if pos.size > neg.size:
        pos = rng.choice(pos, size=neg.size, replace=False)
    elif neg.size > pos.size:
        neg = rng.choice(neg, size=pos.size, replace=False)
    return np.sort(np.concatenate((pos, neg)))


def train(
    dataset: Sequence[tuple[TumorFeatureBag, SurvivalLabel]],
    config: TrainConfig,
) -> TrainResult:
    """Seeded full-batch training with per-epoch censoring balance.

    Every epoch draws a fresh balanced subsample, fresh dropout masks, and
    takes one decoupled-weight-decay Adam step on the blended loss.
    """
    if len(dataset) < 2:
        raise ValueError("training needs at least 2 patients")
    bags = [bag for bag, _ in dataset]
    labels = [lab for _, lab in dataset]
    events = np.array([lab.event for lab in labels], dtype=bool)
    if not events.any():
        raise ValueError("training needs at least one observed event")

    input_dim = bags[0].features.shape[1]
    rng = np.random.default_rng(config.seed)
    params = init_params(input_dim, seed=config.seed)
    m_state = _zero_grads(params)
    v_state = _zero_grads(params)

    history: list[dict[str, float]] = []
    for epoch in range(config.epochs):
        if config.balanced_sampling:
            chosen = _balanced_sample(events, rng)
        else:
            chosen = np.arange(len(bags))
        epoch_bags = [bags[i] for i in chosen]
        epoch_labels = [labels[i] for i in chosen]
        masks = [
            dropout_masks(bag.features, config.dropout, rng) for bag in epoch_bags
        ]
        alpha = blend_alpha(epoch, config.epochs) if config.epochs > 1 else 1.0
        total, mse, cox, grads = loss_and_gradients(
            params, epoch_bags, epoch_labels, alpha, config.pooling, masks
        )

        step = epoch + 1
        for key in params:
            m_state[key] = ADAM_BETA1 * m_state[key] + (1 - ADAM_BETA1) * grads[key]
            v_state[key] = ADAM_BETA2 * v_state[key] + (1 - ADAM_BETA2) * grads[key] ** 2
            m_hat = m_state[key] / (1 - ADAM_BETA1**step)
            v_hat = v_state[key] / (1 - ADAM_BETA2**step)
            update = m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            if key in _WEIGHT_KEYS:
                update = update + config.weight_decay * params[key]
            params[key] = params[key] - config.learning_rate * update

        history.append(
            {"epoch": float(epoch), "alpha": alpha, "mse": mse, "cox": cox, "total": total}
        )
    return TrainResult(params=params, history=history, config=config)


def predict_hazard(
    params: dict[str, np.ndarray], bag: TumorFeatureBag, pooling: str
) -> float:
    """Pooled hazard with dropout disabled."""
    cache = forward(bag, params, masks=None)
    return pool(cache.scores, pooling, bag.volumes)


def late_fuse(pre_hazard: float | None, post_hazard: float | None) -> float:
    """Mean of the phase hazards; a missing phase defers to the other."""
    if pre_hazard is None and post_hazard is None:
        raise ValueError("no hazard available in either phase")
    if pre_hazard is None:
        return float(post_hazard)
    if post_hazard is None:
        return float(pre_hazard)
    return 0.5 * (pre_hazard + post_hazard)


def save_checkpoint(path, params: dict[str, np.ndarray], config: TrainConfig) -> None:
    payload = {
        "architecture": {
            "input_dim": int(params["w1"].shape[0]),
            "encoder_hidden": ENCODER_HIDDEN,
            "code_width": CODE_WIDTH,
            "regressor_hidden": REGRESSOR_HIDDEN,
        },
        "config": {
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "weight_decay": config.weight_decay,
            "pooling": config.pooling,
            "dropout": config.dropout,
            "balanced_sampling": config.balanced_sampling,
            "seed": config.seed,
        },
        "params": {k: v.tolist() for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], TrainConfig]:
    payload = json.loads(Path(path).read_text())
    params = {k: np.asarray(v, dtype=np.float64) for k, v in payload["params"].items()}
    config = TrainConfig(**payload["config"])
    return params, config


def write_history(path, history: list[dict[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "alpha", "mse", "cox", "total"])
        writer.writeheader()
        writer.writerows(history)
