"""Caption encoding: vocabulary, tokenization, and the trainable encoder.

The encoder maps a token sequence to a 40-dim vector through a word
embedding and a single GRU layer whose final valid state is projected
down. Each generation stage trains its own copy of the parameters;
the vocabulary is shared and serialized as one token per line.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .core_types import TEXT_DIM
from .errors import EmptyCaption

PAD_INDEX = 0
UNK_INDEX = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MAX_CAPTION_TOKENS = 24

_WORD_RE = re.compile(r"[a-z0-9]+")


class Vocabulary:
    """Dense token table; index 0 is PAD, index 1 is UNK."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            tokens = [PAD_TOKEN, UNK_TOKEN] + tokens
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text().splitlines()
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError(f"{path} does not start with the special tokens")
        return cls(lines)


def words_of(caption: str):
    return _WORD_RE.findall(caption.lower())


def build_vocabulary(captions) -> Vocabulary:
    """Alphabetically sorted unique words from the corpus, after specials."""
    seen = set()
    for caption in captions:
        seen.update(words_of(caption))
    return Vocabulary(sorted(seen))


def tokenize(caption: str, vocab: Vocabulary,
             max_len: int = MAX_CAPTION_TOKENS) -> list:
    """Caption -> fixed-length index list (padded/truncated to max_len)."""
    if not caption or not caption.strip():
        raise EmptyCaption("caption is empty")
    indices = [vocab.index.get(w, UNK_INDEX) for w in words_of(caption)]
    if not indices:
        raise EmptyCaption(f"caption has no tokens: {caption!r}")
    indices = indices[:max_len]
    return indices + [PAD_INDEX] * (max_len - len(indices))


class TextEncoder(nn.Module):
    """Embedding -> GRU -> projection of the last valid state, fixed power.

    The output is L2-normalized to norm sqrt(out_dim), i.e. unit power per
    dimension, so the text signal enters downstream networks at the same
    scale as the noise and attribute dims no matter how small the raw
    projection is; only the embedding direction carries information.
    """

    def __init__(self, vocab_size: int, embed_dim: int = 64,
                 hidden_dim: int = 64, out_dim: int = TEXT_DIM):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, embed_dim, padding_idx=PAD_INDEX)
        self.gru = nn.GRU(embed_dim, hidden_dim, batch_first=True)
        self.project = nn.Linear(hidden_dim, out_dim)
        self.out_norm = float(out_dim) ** 0.5

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.dim() == 1:
            return self.forward(tokens.unsqueeze(0)).squeeze(0)
        # gather the state at the last non-pad position so that trailing
        # padding cannot influence the output
        lengths = tokens.ne(PAD_INDEX).sum(dim=1).clamp(min=1)
        states, _ = self.gru(self.embedding(tokens))
        idx = (lengths - 1).view(-1, 1, 1).expand(-1, 1, states.size(2))
        raw = self.project(states.gather(1, idx).squeeze(1))
        return raw * (self.out_norm / raw.norm(dim=1, keepdim=True).clamp_min(1e-8))


def encode_text(encoder: TextEncoder, caption: str, vocab: Vocabulary) -> np.ndarray:
    """Convenience wrapper: caption string -> length-40 numpy vector."""
    tokens = torch.tensor(tokenize(caption, vocab), dtype=torch.long)
    with torch.no_grad():
        vec = encoder(tokens)
    out = vec.detach().cpu().numpy().astype(np.float64)
    if out.shape != (TEXT_DIM,):
        raise AssertionError(f"encoder produced shape {out.shape}")
    return out
