"""Training loop: decoupled-weight-decay Adam, step-decay schedule,
checkpointing, evaluation, and the toy-scale overfit harness."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .aggregate3d import DisparityMap
from .config import ModelConfig, desk_preset
from .data_io import StereoSample, batch, generate_random_dot_pair
from .losses import LossWeights, multiscale_loss
from .metrics import EvalReport, evaluate
from .model import StereoNet
from .tensor import Tensor, save_tensor, load_tensor


@dataclass
class Schedule:
    base_lr: float = 1e-3
    decay_factor: float = 2.0
    milestones: tuple = (20, 32, 40, 48, 56)  # published 60-epoch plan

    def __post_init__(self):
        if list(self.milestones) != sorted(set(self.milestones)):
            raise ValueError("milestones must be strictly increasing")

    def lr_at(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError(f"epoch must be >= 0, got {epoch}")
        # decay applies once the milestone epoch completes, so an epoch equal
        # to a milestone already sees the decayed value
        passed = sum(1 for m in self.milestones if epoch >= m)
        return self.base_lr / self.decay_factor ** passed


def desk_schedule(epochs: int, base_lr: float = 1e-3) -> Schedule:
    """Milestones at the same proportions as the 60-epoch plan."""
    fracs = (20 / 60, 32 / 60, 40 / 60, 48 / 60, 56 / 60)
    ms = sorted({max(1, int(round(f * epochs))) for f in fracs})
    return Schedule(base_lr=base_lr, milestones=tuple(ms))


class AdamW:
    """Adam with decoupled weight decay and bias-corrected moments."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 1e-4):
        self.params = dict(params)  # name -> Tensor
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValueError(f"{name}: grad shape {g.shape} != param {p.data.shape}")
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            p.data = (p.data * (1 - self.lr * self.weight_decay)
                      - self.lr * update).astype(p.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict:
        out = {"step_count": self.step_count}
        for k in self.params:
            out[f"m.{k}"] = self.m[k]
            out[f"v.{k}"] = self.v[k]
        return out


def clip_grad_norm(params, max_norm: float) -> float:
    total = 0.0
    grads = []
    for p in params:
        if p.grad is not None:
            grads.append(p)
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        scale = max_norm / (norm + 1e-12)
        for p in grads:
            p.grad = p.grad * scale
    return norm


# -- checkpoints ----------------------------------------------------------------


def save_checkpoint(path, model: StereoNet, optimizer: AdamW | None = None,
                    extra: dict | None = None):
    """Directory checkpoint: one tensor file per parameter plus a manifest."""
    os.makedirs(path, exist_ok=True)
    manifest = {"params": {}, "buffers": {}, "config": model.config.to_dict()}
    if extra:
        manifest["extra"] = extra
    for i, (name, p) in enumerate(model.named_parameters()):
        fname = f"p{i:04d}.esmt"
        save_tensor(os.path.join(path, fname), p.data)
        manifest["params"][name] = {"file": fname, "shape": list(p.shape),
                                    "dtype": p.dtype.name}
    for i, (name, b) in enumerate(model.named_buffers()):
        fname = f"b{i:04d}.esmt"
        save_tensor(os.path.join(path, fname), b.astype(np.float64))
        manifest["buffers"][name] = {"file": fname, "shape": list(b.shape)}
    if optimizer is not None:
        manifest["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1,
                                 "beta2": optimizer.beta2, "eps": optimizer.eps,
                                 "weight_decay": optimizer.weight_decay,
                                 "step_count": optimizer.step_count}
    tmp = os.path.join(path, ".manifest.tmp")
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    os.replace(tmp, os.path.join(path, "manifest.json"))


def load_checkpoint(path) -> tuple[StereoNet, dict]:
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    config = ModelConfig.from_dict(manifest["config"])
    model = StereoNet(config)
    for name, meta in manifest["params"].items():
        model.load_param(name, load_tensor(os.path.join(path, meta["file"])))
    for name, meta in manifest.get("buffers", {}).items():
        model.load_param(name, load_tensor(os.path.join(path, meta["file"])))
    return model, manifest


# -- training ---------------------------------------------------------------------


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 2
    crop: tuple = (64, 128)
    lr: float = 1e-3
    weight_decay: float = 1e-4
    clip_norm: float = 0.0  # 0 disables; the overfit preset turns it on
    seed: int = 0
    eval_every: int = 25
    target_epe: float | None = None  # stop early once reached on the train set


@dataclass
class TrainResult:
    loss_curve: list = field(default_factory=list)
    steps_run: int = 0
    final_report: EvalReport | None = None
    initial_report: EvalReport | None = None
    aborted_nan: bool = False


def valid_eval_mask(gt: np.ndarray, valid: np.ndarray, d_max: int) -> np.ndarray:
    # missing GT is encoded as 0; values at or beyond d_max are out of range
    return valid & (gt > 0) & (gt < d_max)


def evaluate_model(model: StereoNet, samples: list[StereoSample],
                   sigmas=(1.0, 2.0, 3.0)) -> EvalReport:
    model.eval()
    preds, gts, masks = [], [], []
    for s in samples:
        maps = model(Tensor(s.left[None]), Tensor(s.right[None]))
        preds.append(maps[-1].data.data[0])
        gts.append(s.gt)
        masks.append(valid_eval_mask(s.gt, s.valid, model.config.d_max))
    model.train()
    return evaluate(np.concatenate([p.ravel() for p in preds]),
                    np.concatenate([g.ravel() for g in gts]),
                    np.concatenate([m.ravel() for m in masks]),
                    sigmas=sigmas)


def train(model: StereoNet, samples: list[StereoSample], cfg: TrainConfig,
          checkpoint_dir=None, log=None) -> TrainResult:
    """Deterministic given cfg.seed; aborts on NaN loss keeping the last
    checkpoint intact."""
    if not samples:
        raise ValueError("dataset is empty")
    result = TrainResult()
    opt = AdamW(dict(model.named_parameters()), lr=cfg.lr,
                weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    weights = LossWeights()
    result.initial_report = evaluate_model(model, samples)

    steps_per_epoch = max(1, len(samples) // cfg.batch_size)
    schedule = desk_schedule(max(1, cfg.steps // steps_per_epoch), base_lr=cfg.lr)

    for step in range(cfg.steps):
        opt.lr = schedule.lr_at(step // steps_per_epoch)
        pick = rng.choice(len(samples), size=cfg.batch_size, replace=False)
        lefts, rights, gts, valids = batch([samples[i] for i in pick],
                                           crop=cfg.crop,
                                           seed=int(rng.integers(0, 2 ** 31)))
        maps = model(Tensor(lefts), Tensor(rights))
        mask = valid_eval_mask(gts, valids, model.config.d_max)
        gt_map = DisparityMap(data=Tensor(gts), scale=1, valid=mask)
        loss = multiscale_loss(maps, gt_map, weights)
        loss_val = float(loss.total.data)
        result.loss_curve.append(loss_val)
        if not np.isfinite(loss_val):
            result.aborted_nan = True
            break
        opt.zero_grad()
        loss.total.backward()
        if cfg.clip_norm > 0:
            clip_grad_norm(model.parameters(), cfg.clip_norm)
        opt.step()
        result.steps_run = step + 1
        if log and (step % 10 == 0 or step == cfg.steps - 1):
            log(f"step {step:4d}  lr {opt.lr:.2e}  loss {loss_val:.4f}")
        if cfg.target_epe is not None and (step + 1) % cfg.eval_every == 0:
            rep = evaluate_model(model, samples)
            if log:
                log(f"step {step:4d}  train EPE {rep.epe:.3f}")
            if rep.epe < cfg.target_epe:
                break

    result.final_report = evaluate_model(model, samples)
    if checkpoint_dir is not None and not result.aborted_nan:
        save_checkpoint(checkpoint_dir, model, opt,
                        extra={"steps_run": result.steps_run})
    return result


# -- overfit harness ----------------------------------------------------------


def make_overfit_set(n_pairs: int = 8, height: int = 64, width: int = 128,
                     d_max: int = 24, block: int = 16, seed: int = 0):
    return [generate_random_dot_pair(height, width, d_max, block,
                                     seed=seed + i, disparity_step=4)
            for i in range(n_pairs)]


def overfit_harness(kind: str = "gwc", steps: int = 500, seed: int = 0,
                    log=None) -> TrainResult:
    """Train the desk preset on 8 synthetic pairs and evaluate on them."""
    model = StereoNet(desk_preset(kind=kind, seed=seed))
    samples = make_overfit_set(seed=seed)
    cfg = TrainConfig(steps=steps, batch_size=2, crop=(64, 128), lr=1e-3,
                      clip_norm=5.0, seed=seed, target_epe=0.9)
    return train(model, samples, cfg, log=log)
