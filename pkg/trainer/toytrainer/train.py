"""Training loop: masked next-token prediction over generated sequences.

Cross-entropy is taken only at chain-token targets (CoT datasets) or at the
answer-token target (non-CoT); input-token positions contribute nothing to
the loss or its gradient.
"""

from __future__ import annotations

import json
import math
import os
import time

import numpy as np
import torch
import torch.nn.functional as F

from .data import Dataset, target_mask
from .model import ToyDecoder, ToyModelConfig

IGNORE_INDEX = -100


def masked_targets(flat: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Next-token targets with IGNORE_INDEX outside the supervised mask.
    flat: (B, T) tokens; mask: (T-1,) bool over target positions."""
    targets = flat[:, 1:].clone()
    targets[:, ~mask] = IGNORE_INDEX
    return targets


def batch_loss(model: ToyDecoder, flat: torch.Tensor, mask: torch.Tensor):
    logits, _ = model(flat[:, :-1])
    targets = masked_targets(flat, mask)
    loss = F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), targets.reshape(-1),
        ignore_index=IGNORE_INDEX,
    )
    return loss, logits


def train(
    dataset: Dataset,
    model_config: ToyModelConfig,
    steps: int,
    batch_size: int = 64,
    lr: float = 5e-5,
    checkpoint_dir: str | None = None,
    checkpoint_every: int = 500,
    log_every: int = 50,
    seed: int = 0,
    resume_from: str | None = None,
    warmup_steps: int = 0,
    lr_min: float | None = None,
) -> ToyDecoder:
    spec = dataset.spec
    if model_config.vocab_size != spec.vocab_size:
        raise ValueError("model vocab size must match the dataset manifest")
    if model_config.max_seq_len < spec.seq_len:
        raise ValueError("model context shorter than the training sequences")

    if resume_from:
        model = load_checkpoint(resume_from)
        if model.config != model_config:
            raise ValueError("checkpoint config differs from the requested one")
    else:
        model = ToyDecoder(model_config)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr)
    mask = torch.from_numpy(target_mask(spec))
    flat = torch.from_numpy(dataset.flat.astype(np.int64))

    def lr_at(step: int) -> float:
        if warmup_steps and step <= warmup_steps:
            return lr * step / warmup_steps
        if lr_min is None:
            return lr
        frac = (step - warmup_steps) / max(steps - warmup_steps, 1)
        return lr_min + 0.5 * (lr - lr_min) * (1 + math.cos(math.pi * frac))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(flat))
    cursor = 0
    t0 = time.time()
    for step in range(1, steps + 1):
        for group in optimizer.param_groups:
            group["lr"] = lr_at(step)
        if cursor + batch_size > len(order):
            order = rng.permutation(len(flat))
            cursor = 0
        idx = order[cursor:cursor + batch_size]
        cursor += batch_size
        batch = flat[idx]

        loss, _ = batch_loss(model, batch, mask)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()

        if step % log_every == 0 or step == 1:
            rate = step / (time.time() - t0)
            print(f"step {step}/{steps} loss {loss.item():.4f} "
                  f"({rate:.2f} steps/s)", flush=True)
        if checkpoint_dir and (step % checkpoint_every == 0 or step == steps):
            save_checkpoint(model, checkpoint_dir, step)
    return model


def save_checkpoint(model: ToyDecoder, checkpoint_dir: str, step: int) -> None:
    os.makedirs(checkpoint_dir, exist_ok=True)
    torch.save(model.state_dict(), os.path.join(checkpoint_dir, "model.pt"))
    with open(os.path.join(checkpoint_dir, "model_config.json"), "w",
              encoding="utf-8") as f:
        json.dump({"step": step, **model.config.to_dict()}, f, indent=2)


def load_checkpoint(checkpoint_dir: str) -> ToyDecoder:
    with open(os.path.join(checkpoint_dir, "model_config.json"),
              encoding="utf-8") as f:
        cfg = json.load(f)
    cfg.pop("step", None)
    model = ToyDecoder(ToyModelConfig(**cfg))
    model.load_state_dict(
        torch.load(os.path.join(checkpoint_dir, "model.pt"),
                   map_location="cpu", weights_only=True)
    )
    model.eval()
    return model
