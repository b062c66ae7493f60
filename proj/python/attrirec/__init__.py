"""Python bindings for the attrirec recommendation engine."""

from ._attrirec import (
    InputError,
    NumericError,
    SyntheticConfig,
    auc,
    bleu_text,
    combine,
    generate_data,
    hit_at_k,
    ndcg_at_k,
    parse_output,
    render_expected_output,
    render_prompt,
    run_cli,
    tokenize,
    update_task_weights,
    Dataset,
    KnowledgeBase,
)

__all__ = [
    "InputError",
    "NumericError",
    "SyntheticConfig",
    "Dataset",
    "KnowledgeBase",
    "auc",
    "bleu_text",
    "combine",
    "generate_data",
    "hit_at_k",
    "ndcg_at_k",
    "parse_output",
    "render_expected_output",
    "render_prompt",
    "run_cli",
    "tokenize",
    "update_task_weights",
]
