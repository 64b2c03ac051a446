"""Sentence embedding: BERT token states, last four layers, summed per sentence.

A sentence is tokenized with [CLS]/[SEP] framing and truncated to 512 tokens
(truncation is reported per sentence, never an error). Each real token's
vector is the concatenation of the hidden states of the model's last four
layers (4 x 768 = 3072); the sentence vector is the SUM of those token
vectors. [CLS], [SEP], and padding are excluded from the sum, so framing
and batch padding never bias the result. Consumers normalize where needed.

`build_model` writes a randomly initialized BERT-family encoder plus a
character-level WordPiece tokenizer to disk, so the service runs fully
offline; any directory in the standard pretrained layout (hidden size 768,
at least four layers) loads the same way.
"""
from __future__ import annotations

import logging
import string
from pathlib import Path

import torch
from transformers import BertConfig, BertModel, BertTokenizerFast
from transformers.utils import logging as hf_logging

from . import EMBEDDING_DIM, MAX_TOKENS

logger = logging.getLogger(__name__)

hf_logging.set_verbosity_error()
hf_logging.disable_progress_bar()

_BATCH_SIZE = 16
_LAYERS_CONCATENATED = 4


class InferenceError(RuntimeError):
    """The model failed while embedding a batch."""


def _character_vocab() -> dict[str, int]:
    """WordPiece vocabulary that decomposes any word into characters."""
    pieces = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    chars = list(string.ascii_lowercase + string.digits)
    punctuation = list(".,!?-':;()/")
    pieces += chars + punctuation
    pieces += ["##" + c for c in chars]
    return {piece: index for index, piece in enumerate(pieces)}


def build_model(model_dir: str | Path, seed: int = 1234) -> Path:
    """Create and save a randomly initialized encoder; no-op if present."""
    model_dir = Path(model_dir)
    if (model_dir / "config.json").exists():
        logger.info("model already present at %s", model_dir)
        return model_dir
    vocab = _character_vocab()
    tokenizer = BertTokenizerFast(vocab=vocab, do_lower_case=True)
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=4,
        num_attention_heads=4,
        intermediate_size=1024,
        max_position_embeddings=MAX_TOKENS,
    )
    model = BertModel(config)
    model_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    logger.info("built %d-layer encoder (seed %d) at %s",
                config.num_hidden_layers, seed, model_dir)
    return model_dir


class SentenceEmbedder:
    """Loads an encoder directory and embeds batches of sentences."""

    def __init__(self, model_dir: str | Path):
        model_dir = Path(model_dir)
        self.tokenizer = BertTokenizerFast.from_pretrained(model_dir)
        self.model = BertModel.from_pretrained(model_dir)
        self.model.eval()
        hidden = self.model.config.hidden_size
        layers = self.model.config.num_hidden_layers
        if hidden * _LAYERS_CONCATENATED != EMBEDDING_DIM:
            raise ValueError(
                f"model hidden size {hidden} cannot produce "
                f"{EMBEDDING_DIM}-dimensional vectors")
        if layers < _LAYERS_CONCATENATED:
            raise ValueError(
                f"model has {layers} layers; need at least "
                f"{_LAYERS_CONCATENATED}")
        self.dim = EMBEDDING_DIM

    def embed(self, sentences: list[str]) -> tuple[list[list[float]], list[bool]]:
        """Embed sentences; returns (vectors, truncated flags), batched."""
        vectors: list[list[float]] = []
        truncated: list[bool] = []
        for start in range(0, len(sentences), _BATCH_SIZE):
            batch = sentences[start:start + _BATCH_SIZE]
            vecs, flags = self._embed_batch(batch)
            vectors.extend(vecs)
            truncated.extend(flags)
        return vectors, truncated

    def _embed_batch(self, batch: list[str]) -> tuple[list[list[float]], list[bool]]:
        full = self.tokenizer(batch, add_special_tokens=True)
        flags = [len(ids) > MAX_TOKENS for ids in full["input_ids"]]
        encoded = self.tokenizer(
            batch,
            truncation=True,
            max_length=MAX_TOKENS,
            padding=True,
            return_special_tokens_mask=True,
            return_tensors="pt",
        )
        try:
            with torch.no_grad():
                out = self.model(
                    input_ids=encoded["input_ids"],
                    attention_mask=encoded["attention_mask"],
                    output_hidden_states=True,
                )
        except Exception as exc:  # noqa: BLE001 - surfaced as a typed error
            raise InferenceError(f"encoder forward pass failed: {exc}") from exc
        token_vectors = torch.cat(
            out.hidden_states[-_LAYERS_CONCATENATED:], dim=-1)
        real = encoded["attention_mask"].bool() & (
            encoded["special_tokens_mask"] == 0)
        vectors = []
        for row in range(token_vectors.shape[0]):
            # an all-special row (e.g. the empty sentence) sums to zeros
            summed = token_vectors[row][real[row]].sum(dim=0)
            vectors.append(summed.tolist())
        return vectors, flags
