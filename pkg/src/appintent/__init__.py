"""Query-to-product intent pipeline.

Builds weighted training data from click logs, pretrains a small
masked-language-model encoder on domain documents, trains a multi-label
product classifier, and serves ranked app-card predictions over HTTP.
"""

__version__ = "0.1.0"
