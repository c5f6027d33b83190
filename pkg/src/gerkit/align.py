"""Tokenization, minimum-edit-distance alignment, and WER.

This is the measurement core of the toolkit: every system (baseline,
oracle, trigram rescoring, LLM correction) is scored by aligning its
output against the reference transcript under unit edit costs and
tallying substitutions, deletions, and insertions.

Alignments are canonical: among all minimum-cost paths the one chosen
maximizes matches, then, read left to right, prefers diagonal steps
(match/sub), then deletions, then insertions. Downstream edit-level
analysis depends on this determinism.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

from gerkit.records import NBestList

log = logging.getLogger(__name__)

EditOp = Literal["match", "sub", "del", "ins"]


@dataclass(frozen=True)
class NormConfig:
    """Text normalization applied before tokenization.

    Defaults: NFC + whitespace collapse only. Lowercasing is off and no
    punctuation is stripped; transcripts are scored as written unless the
    caller opts in. The active config is recorded in report metadata so
    every WER figure is attributable to an explicit normalization.
    """

    unicode_nfc: bool = True
    lowercase: bool = False
    collapse_whitespace: bool = True
    strip_punct: str = ""


DEFAULT_NORM = NormConfig()


def tokenize(text: str, cfg: NormConfig = DEFAULT_NORM) -> list[str]:
    """Normalize and split into word tokens.

    Fixed order: NFC -> optional lowercase -> optional punctuation strip
    -> whitespace split. The empty string yields an empty token list.
    """
    if cfg.unicode_nfc:
        text = unicodedata.normalize("NFC", text)
    if cfg.lowercase:
        text = text.lower()
    if cfg.strip_punct:
        text = text.translate({ord(c): None for c in cfg.strip_punct})
    if cfg.collapse_whitespace:
        return text.split()
    return [t for t in text.split(" ") if t]


@dataclass(frozen=True)
class AlignOp:
    """One step of an alignment path.

    ref_index is set for match/sub/del, hyp_index for match/sub/ins;
    both are 0-based positions into the respective token sequences.
    """

    op: EditOp
    ref_index: Optional[int] = None
    hyp_index: Optional[int] = None


@dataclass(frozen=True)
class Alignment:
    ops: tuple[AlignOp, ...]

    @property
    def cost(self) -> int:
        return sum(1 for o in self.ops if o.op != "match")


@dataclass(frozen=True)
class EditCounts:
    """S/D/I/match tallies for one reference-hypothesis pair."""

    n_ref: int
    sub: int = 0
    del_: int = 0
    ins: int = 0
    match: int = 0

    def __post_init__(self) -> None:
        if self.match + self.sub + self.del_ != self.n_ref:
            raise ValueError(
                f"inconsistent counts: match+sub+del = "
                f"{self.match + self.sub + self.del_} != n_ref = {self.n_ref}"
            )

    @property
    def errors(self) -> int:
        return self.sub + self.del_ + self.ins

    @property
    def wer(self) -> Optional[float]:
        """Per-utterance WER in percent; None when the reference is empty."""
        if self.n_ref == 0:
            return None
        return 100.0 * self.errors / self.n_ref


def _suffix_tables(
    ref: Sequence[str], hyp: Sequence[str]
) -> tuple[list[list[int]], list[list[int]]]:
    # d[i][j] = edit distance between ref[i:] and hyp[j:];
    # k[i][j] = max match count among min-cost paths for that suffix pair
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    k = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][m] = n - i
    for j in range(m + 1):
        d[n][j] = m - j
    for i in range(n - 1, -1, -1):
        ri = ref[i]
        drow, dbelow = d[i], d[i + 1]
        krow, kbelow = k[i], k[i + 1]
        for j in range(m - 1, -1, -1):
            eq = ri == hyp[j]
            best_d = dbelow[j + 1] + (0 if eq else 1)
            best_k = kbelow[j + 1] + (1 if eq else 0)
            cand_d, cand_k = dbelow[j] + 1, kbelow[j]
            if cand_d < best_d or (cand_d == best_d and cand_k > best_k):
                best_d, best_k = cand_d, cand_k
            cand_d, cand_k = drow[j + 1] + 1, krow[j + 1]
            if cand_d < best_d or (cand_d == best_d and cand_k > best_k):
                best_d, best_k = cand_d, cand_k
            drow[j], krow[j] = best_d, best_k
    return d, k


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Minimum-cost alignment under unit costs (sub = del = ins = 1).

    Among minimum-cost paths the one with the most matches wins; that
    makes the S/D/I decomposition unique, so counts are symmetric under
    swapping ref and hyp. Remaining ties are positional and break
    deterministically: walking from the start, prefer diagonal
    (match/sub), then deletion, then insertion, which pushes insertions
    as late as possible and keeps edit anchors stable for the
    error-persistence analysis.
    """
    d, k = _suffix_tables(ref, hyp)
    n, m = len(ref), len(hyp)
    i = j = 0
    ops: list[AlignOp] = []
    while i < n or j < m:
        dd, kk = d[i][j], k[i][j]
        if (
            i < n
            and j < m
            and dd == d[i + 1][j + 1] + (0 if ref[i] == hyp[j] else 1)
            and kk == k[i + 1][j + 1] + (1 if ref[i] == hyp[j] else 0)
        ):
            ops.append(AlignOp("match" if ref[i] == hyp[j] else "sub", i, j))
            i += 1
            j += 1
        elif i < n and dd == d[i + 1][j] + 1 and kk == k[i + 1][j]:
            ops.append(AlignOp("del", i, None))
            i += 1
        else:
            ops.append(AlignOp("ins", None, j))
            j += 1
    return Alignment(tuple(ops))


def wer_counts(a: Alignment, n_ref: int) -> EditCounts:
    """Tally an alignment into EditCounts. n_ref must match the alignment."""
    sub = del_ = ins = match = 0
    for o in a.ops:
        if o.op == "match":
            match += 1
        elif o.op == "sub":
            sub += 1
        elif o.op == "del":
            del_ += 1
        else:
            ins += 1
    counts = EditCounts(n_ref=n_ref, sub=sub, del_=del_, ins=ins, match=match)
    return counts


def score_pair(
    ref_tokens: Sequence[str], hyp_tokens: Sequence[str]
) -> EditCounts:
    """Align and tally in one step."""
    return wer_counts(align(ref_tokens, hyp_tokens), len(ref_tokens))


def corpus_error_totals(counts: Sequence[EditCounts]) -> tuple[int, int, int]:
    """Sum errors and reference tokens, excluding empty references.

    Returns (total_errors, total_ref_tokens, n_empty_reference).
    """
    errors = tokens = empty = 0
    for c in counts:
        if c.n_ref == 0:
            empty += 1
            continue
        errors += c.errors
        tokens += c.n_ref
    return errors, tokens, empty


def corpus_wer(counts: Sequence[EditCounts]) -> float:
    """Corpus WER in percent: error sum over token sum.

    Not the mean of per-sentence WERs. Utterances with an empty reference
    are excluded from both sums and counted in a logged warning.
    """
    errors, tokens, empty = corpus_error_totals(counts)
    if tokens == 0:
        raise ValueError("corpus WER undefined: every reference is empty")
    if empty:
        log.warning("corpus_wer: excluded %d utterance(s) with empty reference", empty)
    return 100.0 * errors / tokens


def oracle_select(
    ref_tokens: Sequence[str],
    nbest: NBestList,
    cfg: NormConfig = DEFAULT_NORM,
) -> tuple[int, EditCounts]:
    """Pick the hypothesis with the fewest errors against the reference.

    Ties go to the lowest rank. Returns the 1-based index and its
    EditCounts; the corpus oracle WER is corpus_wer over these minima.
    """
    if not nbest.hypotheses:
        raise ValueError(f"empty N-best list for {nbest.utt_id}")
    best_index = 1
    best_counts: EditCounts | None = None
    for hyp in nbest.hypotheses:
        counts = score_pair(ref_tokens, tokenize(hyp.text, cfg))
        if best_counts is None or counts.errors < best_counts.errors:
            best_counts = counts
            best_index = hyp.rank
    assert best_counts is not None
    return best_index, best_counts
