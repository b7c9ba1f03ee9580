from .episodes import (
    AttackRule,
    Event,
    EventLog,
    GeneratorConfig,
    SportSpec,
    default_sports,
    evaluate_outcomes,
    generate_episode,
)
from .processing import AnswerPool, balance_filter, build_answer_pool, stratified_split
from .qa import QARecord, TEMPLATES, generate_qa, meta_question, oracle_answer, parse_question
from .corpus import Corpus, build_corpus

__all__ = [
    "AnswerPool", "AttackRule", "Corpus", "Event", "EventLog", "GeneratorConfig", "QARecord",
    "SportSpec", "TEMPLATES", "balance_filter", "build_answer_pool", "build_corpus", "default_sports",
    "evaluate_outcomes", "generate_episode", "generate_qa", "meta_question", "oracle_answer",
    "parse_question", "stratified_split",
]
