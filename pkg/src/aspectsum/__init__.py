"""Aspect-based opinion summarization of product reviews.

Segments reviews into sentences, maps each sentence onto pre-defined
aspect categories with per-aspect convolutional classifiers, predicts
sentiment for aspect-bearing sentences, and aggregates the results into
per-aspect positive/negative counts with links back to the sentences.
"""

__version__ = "0.1.0"
