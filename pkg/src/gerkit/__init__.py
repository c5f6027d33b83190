"""gerkit: generative error correction toolkit for ASR N-best lists.

Library surface:

- records: corpus records and the JSONL files the pipeline exchanges
- align: tokenization, edit-distance alignment, WER, oracle selection
- ctc: prefix beam search over CTC log-probabilities + exact oracle
- ngram: interpolated Witten-Bell trigram LM, N-best rescoring
- correction: prompt building, LLM backends, response parsing
- analysis: sentence categories and edit-level TP/FN/FP accounting
- report: experiment config, evaluation orchestration, report emission
- cli: the gerkit command
"""

__version__ = "0.1.0"

from gerkit.align import (
    Alignment,
    EditCounts,
    NormConfig,
    align,
    corpus_wer,
    oracle_select,
    score_pair,
    tokenize,
    wer_counts,
)
from gerkit.analysis import (
    AnchoredError,
    EditAnalysis,
    SentenceCategory,
    aggregate,
    categorize_sentence,
    edit_level_analysis,
    extract_anchored_errors,
    precision_recall,
)
from gerkit.correction import (
    BackendConfig,
    FewShotExample,
    PromptConfig,
    build_prompt,
    correct_batch,
    parse_generation,
    parse_selection,
)
from gerkit.ctc import (
    DecodeConfig,
    LogitMatrix,
    Vocab,
    collapse,
    ctc_beam_search,
    ctc_brute_force,
    load_logits,
    make_logit_matrix,
)
from gerkit.ngram import (
    TrigramLM,
    cond_prob,
    load_lm,
    rescore_nbest,
    save_lm,
    sentence_logprob,
    train_trigram,
)
from gerkit.records import (
    CorrectionRecord,
    Hypothesis,
    NBestList,
    Utterance,
    load_corrections,
    load_manifest,
    load_nbest,
    make_nbest,
    save_records,
)
