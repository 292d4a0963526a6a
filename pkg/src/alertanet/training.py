"""Seeded mini-batch training of the joint movement + volatility objective.

The loss for one sample is ``BCE(movement logit, y_m) * [y_m != ABSTAIN] +
lambda * BCE(volatility logit, y_v)``, both terms computed in logit space
with the numerically stable form.  A batch optimizes the uniform mean of the
per-sample losses, so dead-zone (ABSTAIN) samples still contribute their
volatility term.  Optimization is Adam with global-norm gradient clipping;
everything downstream of (dataset, config) is a pure function of the seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import metrics as mt
from . import numerics as nx
from .data import ABSTAIN, DatasetSplit, WindowedSample, ablation_feature_indices, normalize_ablation_mode
from .errors import CheckpointError, ConfigError, TrainingError, UndefinedMetricError
from .model import ForwardTrace, ModelConfig, forward_batch, init_params

VALID_CHUNK = 1024


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults follow the shipped configuration."""

    window: int = 10
    hidden: int = 32
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss_weight: float = 1.0  # lambda on the volatility term
    ablation: str = "full"
    tda_normalize: bool = False
    patience: int = 20
    clip_norm: float = 5.0
    pos_weight_auto: bool = True
    two_stage: bool = False
    arch: str = "alerta"
    shared_context_cell: bool = True

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch_size must be >= 1, got {self.epochs}/{self.batch_size}")
        # learning_rate == 0 is allowed deliberately: it must leave parameters unchanged.
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.loss_weight < 0:
            raise ConfigError(f"loss_weight must be >= 0, got {self.loss_weight}")
        if self.window < 1 or self.hidden < 1:
            raise ConfigError(f"window and hidden must be >= 1, got {self.window}/{self.hidden}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}/{self.beta2}")
        normalize_ablation_mode(self.ablation)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**obj)


def joint_loss(
    trace: ForwardTrace,
    y_m,
    y_v,
    loss_weight: float,
    volatility_pos_weight: float = 1.0,
) -> nx.Tensor:
    """Joint objective as a recorded scalar; accepts one sample or a batch."""
    loss, _, _ = _loss_terms(trace, y_m, y_v, loss_weight, volatility_pos_weight)
    return loss


def _loss_terms(trace, y_m, y_v, loss_weight, pos_weight):
    batch = trace.batch_size
    y_m = np.atleast_1d(np.asarray(y_m))
    y_v = np.atleast_1d(np.asarray(y_v))
    if y_m.shape != (batch,) or y_v.shape != (batch,):
        raise ConfigError(f"labels {y_m.shape}/{y_v.shape} do not match batch size {batch}")
    mask = (y_m != ABSTAIN).astype(np.float64).reshape(1, batch)
    targets_m = np.where(y_m == ABSTAIN, 0, y_m).astype(np.float64).reshape(1, batch)
    targets_v = y_v.astype(np.float64).reshape(1, batch)

    movement_vec = nx.bce_with_logits(trace.movement_logit, targets_m)
    movement_mean = nx.total_sum(nx.mul_const(movement_vec, mask / batch))
    volatility_vec = nx.bce_with_logits(trace.volatility_logit, targets_v, pos_weight)
    volatility_mean = nx.affine(nx.total_sum(volatility_vec), 1.0 / batch)
    loss = nx.add(movement_mean, nx.affine(volatility_mean, loss_weight))
    return loss, movement_mean.item(), volatility_mean.item()


class Adam:
    """Adam with bias correction; moment buffers keyed by parameter name."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: nx.ParamStore, names: list[str] | None = None) -> None:
        self.steps += 1
        bc1 = 1.0 - self.beta1 ** self.steps
        bc2 = 1.0 - self.beta2 ** self.steps
        for name in names if names is not None else params.names():
            grad = params.grad(name)
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            params.value(name)[...] -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_gradients(params: nx.ParamStore, names: list[str], max_norm: float) -> float:
    """Scale the named gradients so their joint L2 norm is at most ``max_norm``."""
    total = 0.0
    for name in names:
        g = params.grad(name)
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if max_norm and norm > max_norm:
        factor = max_norm / norm
        for name in names:
            params.grad(name)[...] *= factor
    return norm


@dataclass
class TrainReport:
    epochs: list[dict]
    best_epoch: int
    stop_reason: str
    pos_weight: float
    ablation: str
    feature_names_used: list[str]
    seed: int
    stages: list[dict] = field(default_factory=list)
    checkpoint_file: str | None = None
    wall_time_seconds: float = 0.0

    def to_json_dict(self, include_timing: bool = False) -> dict:
        obj = {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "pos_weight": self.pos_weight,
            "ablation": self.ablation,
            "feature_names_used": self.feature_names_used,
            "seed": self.seed,
            "stages": self.stages,
            "checkpoint_file": self.checkpoint_file,
        }
        if include_timing:
            obj["wall_time_seconds"] = self.wall_time_seconds
        return obj


def _sample_arrays(samples: list[WindowedSample], row_indices: list[int] | None):
    x = np.stack([s.x for s in samples])
    if row_indices is not None:
        x = x[:, row_indices, :]
    y_m = np.array([s.y_m for s in samples], dtype=np.int64)
    y_v = np.array([s.y_v for s in samples], dtype=np.int64)
    return np.ascontiguousarray(x), y_m, y_v


def _dataset_loss(params, config, x, y_m, y_v, loss_weight, pos_weight, chunk=VALID_CHUNK):
    n = x.shape[0]
    movement = volatility = total = 0.0
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        trace = forward_batch(x[lo:hi], params, config)
        loss, m_term, v_term = _loss_terms(trace, y_m[lo:hi], y_v[lo:hi], loss_weight, pos_weight)
        weight = hi - lo
        movement += m_term * weight
        volatility += v_term * weight
        total += loss.item() * weight
    return movement / n, volatility / n, total / n


def _first_nonfinite_param(params: nx.ParamStore) -> str | None:
    for name, tensor in params.items():
        if not np.all(np.isfinite(tensor.value)):
            return f"parameter {name!r}"
        if tensor.grad is not None and not np.all(np.isfinite(tensor.grad)):
            return f"gradient of {name!r}"
    return None


def train(split: DatasetSplit, cfg: TrainConfig) -> tuple[nx.ParamStore, ModelConfig, TrainReport]:
    """Fit the model on ``split.train``, early-stopping on validation loss.

    Returns the parameters restored to the best validation epoch.  Two runs
    with the same split and config produce bit-identical parameters.
    """
    cfg.validate()
    if not split.train:
        raise ConfigError("training split is empty")
    if not split.validation:
        raise ConfigError("validation split is empty")

    start = time.perf_counter()
    if split.feature_names:
        row_indices = ablation_feature_indices(split.feature_names, cfg.ablation)
        names_used = [split.feature_names[i] for i in row_indices]
    else:
        if normalize_ablation_mode(cfg.ablation) != "full":
            raise ConfigError("ablation modes other than 'full' need dataset feature names")
        row_indices, names_used = None, []

    train_x, train_ym, train_yv = _sample_arrays(split.train, row_indices)
    valid_x, valid_ym, valid_yv = _sample_arrays(split.validation, row_indices)
    n_train, input_dim, window = train_x.shape
    if window != cfg.window:
        raise ConfigError(f"dataset window {window} does not match config window {cfg.window}")

    config = ModelConfig(
        input_dim=input_dim,
        hidden_dim=cfg.hidden,
        window=window,
        arch=cfg.arch,
        shared_context_cell=cfg.shared_context_cell,
        tda_normalize=cfg.tda_normalize,
        feature_names=names_used,
    )
    rng = np.random.default_rng(cfg.seed)
    params = init_params(config, rng)

    n_pos = int(np.sum(train_yv == 1))
    n_neg = int(np.sum(train_yv == 0))
    pos_weight = (n_neg / n_pos) if (cfg.pos_weight_auto and n_pos > 0 and n_neg > 0) else 1.0

    if cfg.two_stage:
        stage_plan = [
            ("movement", params.names(), 0.0),
            ("volatility", ["W_v", "b_v"], cfg.loss_weight),
        ]
    else:
        stage_plan = [("joint", params.names(), cfg.loss_weight)]

    epoch_rows: list[dict] = []
    stage_rows: list[dict] = []
    global_epoch = 0
    best_epoch = 0
    stop_reason = "epoch budget exhausted"

    for stage_name, trainable, loss_weight in stage_plan:
        optimizer = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
        best_valid = float("inf")
        best_values = params.copy_values()
        stage_best_epoch = global_epoch
        stall = 0
        stage_reason = "epoch budget exhausted"

        for _ in range(cfg.epochs):
            global_epoch += 1
            perm = rng.permutation(n_train)
            movement_sum = volatility_sum = total_sum = 0.0
            for lo in range(0, n_train, cfg.batch_size):
                batch_idx = perm[lo : lo + cfg.batch_size]
                trace = forward_batch(train_x[batch_idx], params, config)
                loss, m_term, v_term = _loss_terms(
                    trace, train_ym[batch_idx], train_yv[batch_idx], loss_weight, pos_weight
                )
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    culprit = _first_nonfinite_param(params) or "batch inputs"
                    raise TrainingError(
                        f"non-finite loss in stage {stage_name!r}, epoch {global_epoch}, "
                        f"batch starting at {lo}; first offender: {culprit}"
                    )
                params.zero_grads()
                nx.backward(loss)
                clip_gradients(params, trainable, cfg.clip_norm)
                optimizer.step(params, trainable)
                weight = len(batch_idx)
                movement_sum += m_term * weight
                volatility_sum += v_term * weight
                total_sum += loss_value * weight

            valid_m, valid_v, valid_total = _dataset_loss(
                params, config, valid_x, valid_ym, valid_yv, loss_weight, pos_weight
            )
            epoch_rows.append(
                {
                    "epoch": global_epoch,
                    "stage": stage_name,
                    "train_movement": movement_sum / n_train,
                    "train_volatility": volatility_sum / n_train,
                    "train_total": total_sum / n_train,
                    "valid_movement": valid_m,
                    "valid_volatility": valid_v,
                    "valid_total": valid_total,
                }
            )
            if valid_total < best_valid:
                best_valid = valid_total
                best_values = params.copy_values()
                stage_best_epoch = global_epoch
                stall = 0
            else:
                stall += 1
                if stall >= cfg.patience:
                    stage_reason = f"no validation improvement for {cfg.patience} epochs"
                    break

        params.load_values(best_values)
        best_epoch = stage_best_epoch
        stop_reason = stage_reason
        stage_rows.append(
            {
                "stage": stage_name,
                "trainable": list(trainable),
                "loss_weight": loss_weight,
                "best_epoch": stage_best_epoch,
                "best_valid_total": best_valid,
                "stop_reason": stage_reason,
            }
        )

    report = TrainReport(
        epochs=epoch_rows,
        best_epoch=best_epoch,
        stop_reason=stop_reason,
        pos_weight=pos_weight,
        ablation=normalize_ablation_mode(cfg.ablation),
        feature_names_used=names_used,
        seed=cfg.seed,
        stages=stage_rows,
        wall_time_seconds=time.perf_counter() - start,
    )
    return params, config, report


# --- evaluation ------------------------------------------------------------


@dataclass
class TaskReport:
    n_scored: int
    n_positive: int
    accuracy: float | None
    mcc: float | None
    auc: float | None
    confusion: dict | None
    note: str = ""

    def to_json_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    movement: TaskReport
    volatility: TaskReport
    n_samples: int
    n_abstained: int
    threshold: float
    metadata: dict

    def to_json_dict(self) -> dict:
        return {
            "movement": self.movement.to_json_dict(),
            "volatility": self.volatility.to_json_dict(),
            "n_samples": self.n_samples,
            "n_abstained": self.n_abstained,
            "threshold": self.threshold,
            "metadata": self.metadata,
        }


def _score_task(y_true: np.ndarray, probs: np.ndarray, threshold: float, task: str) -> TaskReport:
    if len(y_true) == 0:
        return TaskReport(0, 0, None, None, None, None, note=f"{task}: no scored samples; metrics undefined")
    preds = (probs >= threshold).astype(np.int64)
    counts = mt.ConfusionCounts.from_predictions(y_true.tolist(), preds.tolist())
    try:
        auc_value = mt.auc(probs, y_true)
        note = ""
    except UndefinedMetricError as exc:
        auc_value = None
        note = f"{task}: {exc}"
    return TaskReport(
        n_scored=len(y_true),
        n_positive=int(np.sum(y_true == 1)),
        accuracy=mt.accuracy(counts),
        mcc=mt.mcc(counts),
        auc=auc_value,
        confusion=counts.as_dict(),
        note=note,
    )


def predict_probs(
    params: nx.ParamStore,
    config: ModelConfig,
    samples: list[WindowedSample],
    dataset_feature_names: list[str] | None = None,
    chunk: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Movement and volatility probabilities for a list of samples."""
    if not samples:
        raise ConfigError("no samples to evaluate")
    row_indices = None
    if config.feature_names:
        if dataset_feature_names and dataset_feature_names != config.feature_names:
            missing = [n for n in config.feature_names if n not in dataset_feature_names]
            if missing:
                raise CheckpointError(
                    f"dataset lacks feature columns {missing} required by checkpoint config "
                    f"(input_dim={config.input_dim}, features={config.feature_names})"
                )
            row_indices = [dataset_feature_names.index(n) for n in config.feature_names]
    x = np.stack([s.x for s in samples])
    if x.shape[1] != config.input_dim and row_indices is None:
        raise CheckpointError(
            f"sample feature dimension {x.shape[1]} does not match checkpoint config "
            f"(input_dim={config.input_dim}, window={config.window})"
        )
    m_probs = np.empty(len(samples))
    v_probs = np.empty(len(samples))
    for lo in range(0, len(samples), chunk):
        hi = min(lo + chunk, len(samples))
        trace = forward_batch(x[lo:hi], params, config, row_indices)
        m_probs[lo:hi] = trace.movement_probs
        v_probs[lo:hi] = trace.volatility_probs
    return m_probs, v_probs


def evaluate(
    params: nx.ParamStore,
    config: ModelConfig,
    samples: list[WindowedSample],
    threshold: float = 0.5,
    dataset_feature_names: list[str] | None = None,
) -> EvalReport:
    """Score a sample set: movement over non-ABSTAIN samples, volatility over all."""
    m_probs, v_probs = predict_probs(params, config, samples, dataset_feature_names)
    y_m = np.array([s.y_m for s in samples], dtype=np.int64)
    y_v = np.array([s.y_v for s in samples], dtype=np.int64)
    scored = y_m != ABSTAIN
    movement = _score_task(y_m[scored], m_probs[scored], threshold, "movement")
    volatility = _score_task(y_v, v_probs, threshold, "volatility")
    return EvalReport(
        movement=movement,
        volatility=volatility,
        n_samples=len(samples),
        n_abstained=int(np.sum(~scored)),
        threshold=threshold,
        metadata={
            "mcc_convention": mt.MCC_CONVENTION,
            "prediction_rule": "class 1 iff probability >= threshold",
            "model": config.to_dict(),
        },
    )
