"""Data augmentation for n-gram language models with a neural text generator.

The package covers the full loop: learn a subword tokenizer, pretrain and
fine-tune a numpy Transformer LM, sample synthetic in-domain sentences from
prefixes, filter them with simple rules, estimate Kneser-Ney n-gram models,
and interpolate the result with a baseline model.
"""

__version__ = "0.1.0"
