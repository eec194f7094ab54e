"""Módulo de templates de chat e métricas de avaliação de texto."""

from .chat_template import (
    Message,
    Role,
    TemplateId,
    ThinkSplit,
    has_think_marker,
    parse_template_id,
    render,
    strip_think,
    think_stats,
)
from .text_eval import (
    EvalRecord,
    LeakReport,
    MetricReport,
    ScoredOn,
    bleu4,
    format_metric_table,
    leakage_audit,
    load_records,
    mc_accuracy,
    mc_extract,
    refusal_rate,
    rouge_l,
    rouge_n,
    score_records,
    think_penalty,
    tokenize,
)

__all__ = [
    'Message',
    'Role',
    'TemplateId',
    'ThinkSplit',
    'has_think_marker',
    'parse_template_id',
    'render',
    'strip_think',
    'think_stats',
    'EvalRecord',
    'LeakReport',
    'MetricReport',
    'ScoredOn',
    'bleu4',
    'format_metric_table',
    'leakage_audit',
    'load_records',
    'mc_accuracy',
    'mc_extract',
    'refusal_rate',
    'rouge_l',
    'rouge_n',
    'score_records',
    'think_penalty',
    'tokenize',
]
