"""Sentence-level and edit-level analysis of correction behavior.

Sentence level: each utterance is improved, degraded, or unchanged by
comparing corrected error counts with baseline error counts against the
same reference.

Edit level: baseline and corrected outputs are each aligned to the
reference and every non-match operation becomes an anchored error
(type, reference anchor, payload token). Errors persisting from baseline
to corrected output are the per-type multiset intersection on
(anchor, payload); per type t,

    fn_t = |persisting_t|        (baseline errors left uncorrected)
    tp_t = |baseline_t| - fn_t   (baseline errors fixed)
    fp_t = |corrected_t| - fn_t  (new errors introduced)

which makes two identities hold exactly on every corpus: tp + fn equals
the baseline error count per type, and sum(fn + fp) equals the corrected
output's total error count. A baseline substitution that reappears as a
deletion counts as tp_S plus fp_D; this anchor-payload rule is the
operationalization under which both identities hold.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from gerkit.align import Alignment, EditCounts, align

ERROR_TYPES = ("S", "D", "I")


@dataclass(frozen=True)
class SentenceCategory:
    utt_id: str
    category: str  # improved | degraded | unchanged
    base_errors: int
    corr_errors: int


@dataclass(frozen=True)
class AnchoredError:
    """One edit anchored to the reference.

    For S/D the anchor is the reference token index; for I it is the gap
    index, the count of reference tokens consumed before the insertion.
    Payload is the hypothesis token for S/I and None for D.
    """

    type: str
    ref_anchor: int
    payload: Optional[str]


@dataclass(frozen=True)
class EditAnalysis:
    """Per-type true-positive / false-negative / false-positive counts."""

    tp: dict[str, int]
    fn: dict[str, int]
    fp: dict[str, int]

    @staticmethod
    def zeros() -> "EditAnalysis":
        z = lambda: {t: 0 for t in ERROR_TYPES}
        return EditAnalysis(tp=z(), fn=z(), fp=z())

    def total(self, which: str) -> int:
        return sum(getattr(self, which)[t] for t in ERROR_TYPES)

    def __add__(self, other: "EditAnalysis") -> "EditAnalysis":
        return EditAnalysis(
            tp={t: self.tp[t] + other.tp[t] for t in ERROR_TYPES},
            fn={t: self.fn[t] + other.fn[t] for t in ERROR_TYPES},
            fp={t: self.fp[t] + other.fp[t] for t in ERROR_TYPES},
        )


def categorize_sentence(
    utt_id: str, base: EditCounts, corr: EditCounts
) -> SentenceCategory:
    """Improved / degraded / unchanged by raw error count comparison.

    Both counts must come from the same reference, so the comparison is
    equivalent to comparing per-utterance WERs.
    """
    b, c = base.errors, corr.errors
    category = "improved" if c < b else "degraded" if c > b else "unchanged"
    return SentenceCategory(utt_id=utt_id, category=category,
                            base_errors=b, corr_errors=c)


def extract_anchored_errors(
    a: Alignment, hyp_tokens: Sequence[str]
) -> list[AnchoredError]:
    """Turn every non-match op of a canonical alignment into an anchored
    error. Returned in path order; duplicates are meaningful (multiset)."""
    out: list[AnchoredError] = []
    ref_cursor = 0
    for op in a.ops:
        if op.op == "sub":
            out.append(AnchoredError("S", op.ref_index, hyp_tokens[op.hyp_index]))
        elif op.op == "del":
            out.append(AnchoredError("D", op.ref_index, None))
        elif op.op == "ins":
            out.append(AnchoredError("I", ref_cursor, hyp_tokens[op.hyp_index]))
        if op.op in ("match", "sub", "del"):
            ref_cursor += 1
    return out


def _by_type(errors: Sequence[AnchoredError]) -> dict[str, Counter]:
    buckets: dict[str, Counter] = {t: Counter() for t in ERROR_TYPES}
    for e in errors:
        buckets[e.type][(e.ref_anchor, e.payload)] += 1
    return buckets


def edit_level_analysis(
    ref_tokens: Sequence[str],
    baseline_tokens: Sequence[str],
    corrected_tokens: Sequence[str],
) -> EditAnalysis:
    """TP/FN/FP per error type for one utterance.

    All three token sequences must share the reference and normalization.
    """
    base_errors = extract_anchored_errors(align(ref_tokens, baseline_tokens),
                                          baseline_tokens)
    corr_errors = extract_anchored_errors(align(ref_tokens, corrected_tokens),
                                          corrected_tokens)
    base_by_type = _by_type(base_errors)
    corr_by_type = _by_type(corr_errors)
    tp, fn, fp = {}, {}, {}
    for t in ERROR_TYPES:
        persisting = base_by_type[t] & corr_by_type[t]
        n_persist = sum(persisting.values())
        fn[t] = n_persist
        tp[t] = sum(base_by_type[t].values()) - n_persist
        fp[t] = sum(corr_by_type[t].values()) - n_persist
    return EditAnalysis(tp=tp, fn=fn, fp=fp)


def precision_recall(
    ea: EditAnalysis,
) -> dict[str, tuple[Optional[float], Optional[float]]]:
    """Percent precision and recall per type plus 'total' (pooled counts).

    Undefined values (zero denominator) are None and render blank in
    reports; rounding to one decimal happens at report time.
    """
    out: dict[str, tuple[Optional[float], Optional[float]]] = {}
    rows = [(t, ea.tp[t], ea.fn[t], ea.fp[t]) for t in ERROR_TYPES]
    rows.append(("total", ea.total("tp"), ea.total("fn"), ea.total("fp")))
    for name, tp, fn, fp in rows:
        precision = 100.0 * tp / (tp + fp) if tp + fp > 0 else None
        recall = 100.0 * tp / (tp + fn) if tp + fn > 0 else None
        out[name] = (precision, recall)
    return out


@dataclass(frozen=True)
class ExperimentSummary:
    """Corpus-level rollup for one corrected system against the baseline."""

    n_utterances: int
    category_counts: dict[str, int]
    category_pct: dict[str, float]
    wers: dict[str, float]
    pooled: EditAnalysis
    pooled_pr: dict[str, tuple[Optional[float], Optional[float]]]


def aggregate(
    categories: Sequence[SentenceCategory],
    analyses: Sequence[EditAnalysis],
    wers: dict[str, float],
) -> ExperimentSummary:
    """Pool per-utterance results.

    Edit counts are summed before computing precision/recall (micro
    averaging), matching corpus-level reporting; category percentages sum
    to 100 before rounding.
    """
    if not categories:
        raise ValueError("nothing to aggregate")
    counts = {"improved": 0, "degraded": 0, "unchanged": 0}
    for c in categories:
        counts[c.category] += 1
    n = len(categories)
    pct = {k: 100.0 * v / n for k, v in counts.items()}
    pooled = EditAnalysis.zeros()
    for a in analyses:
        pooled = pooled + a
    return ExperimentSummary(
        n_utterances=n,
        category_counts=counts,
        category_pct=pct,
        wers=dict(wers),
        pooled=pooled,
        pooled_pr=precision_recall(pooled),
    )
