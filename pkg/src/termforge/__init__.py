"""Terminology-aware machine translation workbench.

Trains desk-scale phrase-based and neural translation models, adapts them
to a domain from small terminology sets, injects external bilingual
terminology into decoding, and evaluates with BLEU/chrF3/METEOR-lite.
"""

__version__ = "0.1.0"
