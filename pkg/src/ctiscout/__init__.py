"""Focused crawler for cyber threat intelligence pages.

Downloads pages, classifies them by angular distance of document embeddings
to trained per-label ground-truth vectors, follows links only from relevant
pages, and emits a ranked list of relevant documents plus crawl diagnostics.
"""

__version__ = "0.1.0"
