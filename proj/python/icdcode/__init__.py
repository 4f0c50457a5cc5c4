"""Python access to the icdcode pipeline."""

from ._core import (
    ArtifactMismatchError,
    ContextOverflowError,
    Corpus,
    DivergenceError,
    Document,
    Error,
    GeneratorSpec,
    ModeError,
    ValidationError,
    bayes_oracle,
    encode,
    generate,
    load_corpus,
    metrics_report,
    paper_pe,
    rope_apply,
    run_cli,
)

__all__ = [
    "ArtifactMismatchError",
    "ContextOverflowError",
    "Corpus",
    "DivergenceError",
    "Document",
    "Error",
    "GeneratorSpec",
    "ModeError",
    "ValidationError",
    "bayes_oracle",
    "encode",
    "generate",
    "load_corpus",
    "metrics_report",
    "paper_pe",
    "rope_apply",
    "run_cli",
]
