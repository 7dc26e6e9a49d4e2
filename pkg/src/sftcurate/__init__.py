"""Curation of model-generated protein sequences for self-distillation fine-tuning."""

__version__ = "0.1.0"
