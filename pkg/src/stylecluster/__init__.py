"""Subjective-style toolkit for summarization corpora.

Builds dependency-based sentence graphs, trains a small graph network on a
triplet ranking task to embed the article-to-summary writing style of each
sample, clusters a corpus by style, materializes style-pure dataset splits,
and scores generated summaries with an n-gram metric battery.
"""

__version__ = "0.1.0"
