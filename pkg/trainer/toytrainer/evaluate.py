"""Greedy evaluation: decode the query example's chain tokens without
teacher forcing, then export predictions, the learned embedding matrix,
and last-layer attention over the final example window."""

from __future__ import annotations

import os

import numpy as np
import torch

from .data import Dataset, write_cile_matrix, write_cile_tensor, write_predictions
from .model import ToyDecoder


def greedy_decode(
    model: ToyDecoder, prompts: torch.Tensor, n_steps: int
) -> torch.Tensor:
    """Decode n_steps tokens for a batch of equal-length prompts. Argmax
    ties resolve to the lowest token id (numpy argmax semantics)."""
    model.eval()
    seq = prompts
    with torch.no_grad():
        for _ in range(n_steps):
            logits, _ = model(seq)
            last = logits[:, -1].numpy()
            nxt = np.argmax(last, axis=1)
            seq = torch.cat(
                [seq, torch.from_numpy(nxt.astype(np.int64))[:, None]], dim=1
            )
    return seq[:, prompts.shape[1]:]


def evaluate(
    model: ToyDecoder,
    dataset: Dataset,
    out_dir: str,
    batch_size: int = 100,
    export_attention: bool = True,
) -> np.ndarray:
    """Returns the (T, C) predictions; writes predictions.jsonl, etf.cile,
    and attention.cile into out_dir."""
    spec = dataset.spec
    if not spec.cot:
        raise NotImplementedError("evaluation currently targets CoT datasets")
    n, c = spec.n_inputs, spec.chain_len
    window = n + c
    prompt_len = spec.seq_len - c  # K-1 full examples + query inputs

    flat = torch.from_numpy(dataset.flat.astype(np.int64))
    preds = np.empty((len(flat), c), dtype=np.int64)
    attn_out = None
    for lo in range(0, len(flat), batch_size):
        batch = flat[lo:lo + batch_size]
        prompts = batch[:, :prompt_len]
        decoded = greedy_decode(model, prompts, c)
        preds[lo:lo + len(batch)] = decoded.numpy()

        if export_attention:
            # rerun over prompt + decoded chain, dropping the final token so
            # the last row is the position that emits the answer token
            full = torch.cat([prompts, decoded], dim=1)[:, :-1]
            with torch.no_grad():
                _, attn = model(full, return_attn=True)
            wnd = attn[:, -1:, :, -window:, -window:].numpy()
            if attn_out is None:
                attn_out = np.empty((len(flat),) + wnd.shape[1:],
                                    dtype=np.float32)
            attn_out[lo:lo + len(batch)] = wnd

    os.makedirs(out_dir, exist_ok=True)
    write_predictions(os.path.join(out_dir, "predictions.jsonl"),
                      dataset.seq_indices, preds)
    write_cile_matrix(os.path.join(out_dir, "etf.cile"),
                      model.embedding_matrix().numpy())
    if attn_out is not None:
        write_cile_tensor(os.path.join(out_dir, "attention.cile"), attn_out)
    return preds
