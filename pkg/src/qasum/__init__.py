"""qasum: question-answering-first summarization prompting and evaluation.

Rank candidate questions by how much of their answers' wording lands in
reference summaries, build answer-the-questions-then-summarize prompts
with in-context examples, call a pluggable completion backend, and score
outputs with ROUGE — as a library or via the ``qasum`` CLI.
"""

from .corpus import (
    Corpus,
    CorpusSplit,
    DomainRegistry,
    TaskInstance,
    load_corpus,
    sample_icl_examples,
    save_corpus,
    split_corpus,
)
from .harness import ExperimentConfig, RunManifest, run_compare, run_eval, run_rank, run_report
from .lm import CompletionClient, Generation, LmConfig, compute_max_tokens
from .metrics import RougeScore, ScoreRow, aggregate, overlap_precision, rouge_l, rouge_n, tokenize
from .prompting import (
    IclExample,
    ParsedOutput,
    PromptBundle,
    PromptTemplates,
    build_icl_prompt,
    build_qa_prompt,
    build_single_qa,
    build_vanilla,
    parse_output,
)
from .questions import (
    GlobalRanking,
    QuestionSpec,
    RankingTable,
    builtin_bank,
    global_ranking,
    load_ranking,
    rank_questions,
    save_ranking,
    top_k,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "CorpusSplit",
    "CompletionClient",
    "DomainRegistry",
    "ExperimentConfig",
    "Generation",
    "GlobalRanking",
    "IclExample",
    "LmConfig",
    "ParsedOutput",
    "PromptBundle",
    "PromptTemplates",
    "QuestionSpec",
    "RankingTable",
    "RougeScore",
    "RunManifest",
    "ScoreRow",
    "TaskInstance",
    "aggregate",
    "build_icl_prompt",
    "build_qa_prompt",
    "build_single_qa",
    "build_vanilla",
    "builtin_bank",
    "compute_max_tokens",
    "global_ranking",
    "load_corpus",
    "load_ranking",
    "overlap_precision",
    "parse_output",
    "rank_questions",
    "rouge_l",
    "rouge_n",
    "run_compare",
    "run_eval",
    "run_rank",
    "run_report",
    "sample_icl_examples",
    "save_corpus",
    "save_ranking",
    "split_corpus",
    "tokenize",
    "top_k",
]
