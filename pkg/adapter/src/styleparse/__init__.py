"""Raw text to parsed-corpus converter for the stylecluster pipeline.

No external parser models: a small deterministic rule system splits
sentences, assigns Universal POS tags, and attaches flat dependency arcs.
The point is a reproducible, schema-exact feed for the downstream graph
tooling, not linguistic accuracy.
"""

__version__ = "0.1.0"
