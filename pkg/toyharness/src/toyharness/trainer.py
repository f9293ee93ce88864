"""A tiny decoder language model and its training loop.

Small enough to train on one CPU core in seconds, large enough that
embedding quality shows up in the loss. The checkpoint layout keeps the
token embedding tensor named "wte.weight" so downstream tools can find
it, and ties the output head to the embeddings so there is exactly one
vocabulary-sized matrix per model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .tensorfile import read_tensors, write_tensors

SEQ_LEN = 32
EVAL_WINDOWS = 64
WIDTHS = {
    "small": {"hidden": 32, "layers": 1},
    "large": {"hidden": 64, "layers": 2},
}


class Block(nn.Module):
    """Pre-norm causal attention + feed-forward, one head."""

    def __init__(self, hidden: int):
        super().__init__()
        self.ln_1 = nn.LayerNorm(hidden)
        self.attn_qkv = nn.Linear(hidden, 3 * hidden)
        self.attn_proj = nn.Linear(hidden, hidden)
        self.ln_2 = nn.LayerNorm(hidden)
        self.mlp_fc = nn.Linear(hidden, 4 * hidden)
        self.mlp_proj = nn.Linear(4 * hidden, hidden)

    def forward(self, x):
        q, k, v = self.attn_qkv(self.ln_1(x)).chunk(3, dim=-1)
        attended = F.scaled_dot_product_attention(
            q.unsqueeze(1), k.unsqueeze(1), v.unsqueeze(1), is_causal=True
        ).squeeze(1)
        x = x + self.attn_proj(attended)
        return x + self.mlp_proj(F.gelu(self.mlp_fc(self.ln_2(x))))


class TinyDecoderLM(nn.Module):
    def __init__(self, vocab_size: int, hidden: int, layers: int, seq_len: int = SEQ_LEN):
        super().__init__()
        self.wte = nn.Embedding(vocab_size, hidden)
        self.wpe = nn.Embedding(seq_len, hidden)
        self.blocks = nn.ModuleList(Block(hidden) for _ in range(layers))
        self.ln_f = nn.LayerNorm(hidden)
        nn.init.normal_(self.wte.weight, std=0.02)
        nn.init.normal_(self.wpe.weight, std=0.02)

    def forward(self, ids):
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.wte(ids) + self.wpe(positions)
        for block in self.blocks:
            x = block(x)
        # tied head: logits through the embedding matrix
        return self.ln_f(x) @ self.wte.weight.T


@dataclass(frozen=True)
class TrainOutcome:
    checkpoint: Path
    width: str
    steps: int
    seed: int
    initial_train_loss: float
    final_train_loss: float


def read_vocab(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def encode_corpus(corpus_path, vocab_path) -> np.ndarray:
    """Corpus file -> int64 token ids under the given vocab file."""
    ids = {surface: index for index, surface in enumerate(read_vocab(vocab_path))}
    tokens = Path(corpus_path).read_text(encoding="utf-8").split()
    return np.fromiter((ids[token] for token in tokens), dtype=np.int64, count=len(tokens))


def split_train_val(ids: np.ndarray, val_fraction: float = 0.1):
    cut = int(ids.size * (1.0 - val_fraction))
    return ids[:cut], ids[cut:]


def _fixed_windows(ids: np.ndarray, limit: int = EVAL_WINDOWS) -> torch.Tensor:
    """Deterministic evaluation windows: consecutive, non-overlapping."""
    count = min(limit, (ids.size - 1) // SEQ_LEN)
    if count < 1:
        raise ValueError(f"corpus too short for evaluation: {ids.size} tokens")
    starts = np.arange(count) * SEQ_LEN
    return torch.from_numpy(np.stack([ids[s : s + SEQ_LEN + 1] for s in starts]))


def _batch(ids: np.ndarray, rng: np.random.Generator, batch_size: int) -> torch.Tensor:
    starts = rng.integers(0, ids.size - SEQ_LEN - 1, size=batch_size)
    return torch.from_numpy(np.stack([ids[s : s + SEQ_LEN + 1] for s in starts]))


def _loss(model: nn.Module, windows: torch.Tensor) -> torch.Tensor:
    inputs, targets = windows[:, :-1], windows[:, 1:]
    logits = model(inputs)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))


@torch.no_grad()
def evaluate(model: nn.Module, windows: torch.Tensor) -> float:
    model.eval()
    value = float(_loss(model, windows))
    model.train()
    return value


def run_training(
    model: nn.Module,
    train_ids: np.ndarray,
    steps: int,
    seed: int,
    *,
    batch_size: int = 16,
    lr: float = 3e-4,
    on_eval=None,
) -> None:
    """Shared loop: seeded batch order, divergence check, optional hook.

    on_eval(step) is called before step 0 and after every step, letting
    callers snapshot losses on whatever grid they want.
    """
    rng = np.random.default_rng(seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr)
    if on_eval:
        on_eval(0)
    for step in range(1, steps + 1):
        optimizer.zero_grad()
        loss = _loss(model, _batch(train_ids, rng, batch_size))
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"training diverged: loss {loss.item()} at step {step} (seed {seed})"
            )
        loss.backward()
        optimizer.step()
        if on_eval:
            on_eval(step)


def save_model(model: nn.Module, path, metadata: dict) -> Path:
    tensors = {name: value.detach().cpu().numpy() for name, value in model.state_dict().items()}
    return write_tensors(path, tensors, metadata)


def load_model(checkpoint_path) -> tuple[TinyDecoderLM, dict[str, str]]:
    """Rebuild a model from any checkpoint with this layout.

    Shapes drive the architecture: vocab and hidden from the embedding,
    depth from the number of blocks, context length from the positional
    table.
    """
    tensors, metadata = read_tensors(checkpoint_path)
    vocab_size, hidden = tensors["wte.weight"].shape
    seq_len = tensors["wpe.weight"].shape[0]
    layers = len({name.split(".")[1] for name in tensors if name.startswith("blocks.")})
    model = TinyDecoderLM(vocab_size, hidden, layers, seq_len)
    state = {name: torch.from_numpy(values) for name, values in tensors.items()}
    model.load_state_dict(state, strict=True)
    return model, metadata


def train_toy_lm(
    corpus_path,
    vocab_path,
    width: str,
    steps: int,
    out_path,
    *,
    seed: int = 0,
    batch_size: int = 16,
    lr: float = 3e-4,
) -> TrainOutcome:
    """Train one model on one corpus and save its checkpoint.

    steps=0 saves the freshly initialized model untouched. Loss that
    stops being finite aborts with the seed in the message so the run
    can be reproduced.
    """
    if width not in WIDTHS:
        raise ValueError(f"width must be one of {sorted(WIDTHS)}, got {width!r}")
    ids = encode_corpus(corpus_path, vocab_path)
    train_ids, _ = split_train_val(ids)
    train_windows = _fixed_windows(train_ids)

    torch.manual_seed(seed)
    model = TinyDecoderLM(len(read_vocab(vocab_path)), **WIDTHS[width])
    initial = evaluate(model, train_windows)
    run_training(model, train_ids, steps, seed, batch_size=batch_size, lr=lr)
    final = evaluate(model, train_windows)

    checkpoint = save_model(
        model,
        out_path,
        {"width": width, "steps": steps, "seed": seed, "sequence_length": SEQ_LEN},
    )
    return TrainOutcome(
        checkpoint=checkpoint,
        width=width,
        steps=steps,
        seed=seed,
        initial_train_loss=initial,
        final_train_loss=final,
    )
