"""certlang: a DSL for abstract-interpretation DNN certifiers."""

__version__ = "0.1.0"
