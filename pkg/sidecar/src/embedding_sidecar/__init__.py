"""HTTP sentence-embedding service backed by a BERT-family encoder."""

__version__ = "0.1.0"

EMBEDDING_DIM = 3072  # four hidden layers of 768 concatenated per token
MAX_TOKENS = 512      # hard input limit including [CLS] and [SEP]
