"""Semantics-aware textual entailment at desk scale.

Corpus handling (entailment pairs, IOB role sequences), span-based SRL
scoring, ensemble aspect merging, a fused context+semantics classifier,
training, and the full evaluation report suite.
"""

__version__ = "0.1.0"
