"""Trigram language model with interpolated Witten-Bell smoothing.

Used two ways: as the conventional rescoring baseline over N-best lists
and as the fusion source for the CTC beam search decoder.

Estimation is recursive interpolation. For a history h with total count
c(h) and T(h) distinct continuation types,

    lambda(h) = c(h) / (c(h) + T(h))
    P(w | h)  = lambda(h) * c(h, w) / c(h) + (1 - lambda(h)) * P(w | h')

where h' drops the earliest history word. The base case interpolates the
unigram estimate with a uniform distribution over the closed support
vocab + {UNK, EOS}, which guarantees P > 0 everywhere and exact
normalization at every order. An unseen history has lambda = 0, so its
conditional equals the lower-order value exactly.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

_FORMAT_HEADER = "gerkit-trigram-lm 1"


@dataclass
class TrigramLM:
    """Immutable after training; safe to share read-only across threads."""

    vocab: frozenset[str]
    unigrams: dict[str, int]
    bigrams: dict[tuple[str, str], int]
    trigrams: dict[tuple[str, str, str], int]
    min_count: int = 1
    trained_on: str = ""

    # derived tables, built once
    _bi_hist: dict[tuple[str], tuple[int, int]] = field(default_factory=dict, repr=False)
    _tri_hist: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict, repr=False)
    _uni_total: int = field(default=0, repr=False)
    _uni_types: int = field(default=0, repr=False)

    def __post_init__(self) -> None:
        self._uni_total = sum(self.unigrams.values())
        self._uni_types = len(self.unigrams)
        bi_tot: Counter = Counter()
        bi_typ: Counter = Counter()
        for (h1, w), c in self.bigrams.items():
            bi_tot[(h1,)] += c
            bi_typ[(h1,)] += 1
        self._bi_hist = {h: (bi_tot[h], bi_typ[h]) for h in bi_tot}
        tri_tot: Counter = Counter()
        tri_typ: Counter = Counter()
        for (h2, h1, w), c in self.trigrams.items():
            tri_tot[(h2, h1)] += c
            tri_typ[(h2, h1)] += 1
        self._tri_hist = {h: (tri_tot[h], tri_typ[h]) for h in tri_tot}

    @property
    def support(self) -> frozenset[str]:
        """Every symbol with nonzero probability under any history."""
        return self.vocab | {UNK, EOS}

    def map_word(self, w: str) -> str:
        return w if w in self.vocab or w in (EOS, BOS) else UNK

    def _p_unigram(self, w: str) -> float:
        n_support = len(self.vocab) + 2  # + UNK + EOS
        uniform = 1.0 / n_support
        total, types = self._uni_total, self._uni_types
        if total == 0:
            return uniform
        lam = total / (total + types)
        return lam * self.unigrams.get(w, 0) / total + (1.0 - lam) * uniform

    def _p_bigram(self, w: str, h1: str) -> float:
        lower = self._p_unigram(w)
        total, types = self._bi_hist.get((h1,), (0, 0))
        if total == 0:
            return lower
        lam = total / (total + types)
        return lam * self.bigrams.get((h1, w), 0) / total + (1.0 - lam) * lower

    def _p_trigram(self, w: str, h2: str, h1: str) -> float:
        lower = self._p_bigram(w, h1)
        total, types = self._tri_hist.get((h2, h1), (0, 0))
        if total == 0:
            return lower
        lam = total / (total + types)
        return lam * self.trigrams.get((h2, h1, w), 0) / total + (1.0 - lam) * lower


def train_trigram(
    sentences: Iterable[Sequence[str]],
    min_count: int = 1,
    trained_on: str = "",
) -> TrigramLM:
    """Estimate a trigram model from tokenized sentences.

    Sentences are padded with two BOS and one EOS; words occurring fewer
    than min_count times are mapped to UNK before counting. The default
    min_count of 1 keeps every observed word, which suits small corpora;
    UNK stays reserved for test-time unknowns.
    """
    sents = [list(s) for s in sentences]
    if not any(sents):
        raise ValueError("training corpus has no non-empty sentence")

    raw_freq: Counter = Counter(w for s in sents for w in s)
    vocab = frozenset(w for w, c in raw_freq.items() if c >= min_count) - {BOS, EOS, UNK}

    def keep(w: str) -> str:
        return w if w in vocab else UNK

    unigrams: Counter = Counter()
    bigrams: Counter = Counter()
    trigrams: Counter = Counter()
    for s in sents:
        padded = [BOS, BOS] + [keep(w) for w in s] + [EOS]
        for i in range(2, len(padded)):
            w, h1, h2 = padded[i], padded[i - 1], padded[i - 2]
            unigrams[w] += 1
            bigrams[(h1, w)] += 1
            trigrams[(h2, h1, w)] += 1

    return TrigramLM(
        vocab=vocab,
        unigrams=dict(unigrams),
        bigrams=dict(bigrams),
        trigrams=dict(trigrams),
        min_count=min_count,
        trained_on=trained_on,
    )


def cond_prob(lm: TrigramLM, w: str, history: Sequence[str] = ()) -> float:
    """P(w | history) for a history of at most two words.

    Unknown words (in the history or as the prediction) map to UNK;
    shorter histories query the matching lower order directly.
    """
    if len(history) > 2:
        history = history[-2:]
    w = lm.map_word(w)
    hist = [lm.map_word(h) for h in history]
    if len(hist) == 2:
        return lm._p_trigram(w, hist[0], hist[1])
    if len(hist) == 1:
        return lm._p_bigram(w, hist[0])
    return lm._p_unigram(w)


def sentence_logprob(lm: TrigramLM, tokens: Sequence[str]) -> float:
    """Log probability of a padded sentence, ending with the EOS term."""
    padded = [BOS, BOS] + [lm.map_word(t) for t in tokens] + [EOS]
    total = 0.0
    for i in range(2, len(padded)):
        total += math.log(cond_prob(lm, padded[i], (padded[i - 2], padded[i - 1])))
    return total


def rescore_nbest(lm: TrigramLM, nbest, alpha: float, beta: float):
    """Re-rank hypotheses by acoustic score + alpha*LM + beta*word count.

    Stable for ties, so alpha = beta = 0 is the identity permutation.
    Hypothesis text is split on whitespace for LM scoring.
    """
    from gerkit.records import NBestList, Hypothesis

    def combined(h) -> float:
        words = h.text.split()
        return h.score + alpha * sentence_logprob(lm, words) + beta * len(words)

    scored = [(h, combined(h)) for h in nbest.hypotheses]
    scored.sort(key=lambda pair: -pair[1])
    hyps = tuple(
        Hypothesis(text=h.text, score=score, rank=r)
        for r, (h, score) in enumerate(scored, start=1)
    )
    return NBestList(utt_id=nbest.utt_id, hypotheses=hyps)


# ---------------------------------------------------------------------------
# serialization: versioned, self-describing text format


def save_lm(lm: TrigramLM, path: Union[str, Path]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        f.write(f"{_FORMAT_HEADER}\n")
        f.write(f"trained_on\t{lm.trained_on}\n")
        f.write(f"min_count\t{lm.min_count}\n")
        f.write(f"unigrams\t{len(lm.unigrams)}\n")
        for w in sorted(lm.unigrams):
            f.write(f"{w}\t{lm.unigrams[w]}\n")
        f.write(f"bigrams\t{len(lm.bigrams)}\n")
        for h1, w in sorted(lm.bigrams):
            f.write(f"{h1}\t{w}\t{lm.bigrams[(h1, w)]}\n")
        f.write(f"trigrams\t{len(lm.trigrams)}\n")
        for h2, h1, w in sorted(lm.trigrams):
            f.write(f"{h2}\t{h1}\t{w}\t{lm.trigrams[(h2, h1, w)]}\n")


def load_lm(path: Union[str, Path]) -> TrigramLM:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != _FORMAT_HEADER:
            raise ValueError(f"{path}: not a gerkit trigram model (header {header!r})")
        trained_on = f.readline().rstrip("\n").split("\t", 1)[1]
        min_count = int(f.readline().rstrip("\n").split("\t", 1)[1])

        def read_table(name: str, arity: int) -> dict:
            label, n = f.readline().rstrip("\n").split("\t")
            if label != name:
                raise ValueError(f"{path}: expected {name} table, found {label!r}")
            table = {}
            for _ in range(int(n)):
                parts = f.readline().rstrip("\n").split("\t")
                key = parts[0] if arity == 1 else tuple(parts[:arity])
                table[key] = int(parts[arity])
            return table

        unigrams = read_table("unigrams", 1)
        bigrams = read_table("bigrams", 2)
        trigrams = read_table("trigrams", 3)

    vocab = frozenset(unigrams) - {EOS, UNK, BOS}
    return TrigramLM(
        vocab=vocab,
        unigrams=unigrams,
        bigrams=bigrams,
        trigrams=trigrams,
        min_count=min_count,
        trained_on=trained_on,
    )
