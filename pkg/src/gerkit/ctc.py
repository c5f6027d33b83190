"""CTC prefix beam search over frame-level log-probabilities.

Produces N-best lists from a T x V matrix of per-frame class
log-probabilities, optionally with shallow trigram fusion: the combined
score of a finished candidate is

    log P_ctc(text) + alpha * log P_lm(words) + beta * (word count)

with the LM applied incrementally at each word boundary during search.
Beams are tracked per collapsed label sequence with separate
blank/non-blank mass (the prefix semiring); the beam proposes candidates
and each surviving candidate's reported log P_ctc is then computed
exactly by a forward pass (exact_label_logprob), with candidates that
render to the same text merged by summing mass. So the N-best entries
are distinct strings carrying true marginals whenever the beam found
them. ctc_brute_force enumerates all V^T frame paths and is the exact
reference the decoder is tested against.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from gerkit.ngram import TrigramLM, UNK, cond_prob
from gerkit.records import DataError, Hypothesis, NBestList

NEG_INF = float("-inf")


class FormatError(ValueError):
    """Logits file does not match the CTCL format."""


class ConfigError(ValueError):
    """Invalid decoding configuration."""


@dataclass(frozen=True)
class LogitMatrix:
    """Frame-level class log-probabilities for one utterance.

    values has shape (T, V); rows are normalized log-probabilities
    (construct with raw=True to apply a log-softmax first).
    """

    utt_id: str
    values: np.ndarray
    blank_index: int

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise FormatError(f"{self.utt_id}: logits must be a T x V matrix")
        if not np.all(np.isfinite(v)):
            raise DataError(f"{self.utt_id}: non-finite values in logits")
        if not 0 <= self.blank_index < v.shape[1]:
            raise FormatError(
                f"{self.utt_id}: blank index {self.blank_index} outside vocab "
                f"of size {v.shape[1]}"
            )
        row_sums = np.exp(v).sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-5):
            raise DataError(
                f"{self.utt_id}: rows are not normalized log-probabilities "
                f"(max |sum-1| = {np.abs(row_sums - 1).max():.3g})"
            )

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.values.shape[1]


def log_softmax(raw: np.ndarray) -> np.ndarray:
    shifted = raw - raw.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def make_logit_matrix(
    utt_id: str, values: np.ndarray, blank_index: int, raw: bool = False
) -> LogitMatrix:
    values = np.asarray(values, dtype=np.float64)
    if raw:
        values = log_softmax(values)
    return LogitMatrix(utt_id=utt_id, values=values, blank_index=blank_index)


@dataclass(frozen=True)
class Vocab:
    """CTC class inventory: index = class id.

    word_delimiter is the token rendered as a space (character-level CTC
    convention); None means the output carries no word structure. The
    blank class sits at blank_index and is never rendered.
    """

    tokens: tuple[str, ...]
    word_delimiter: Optional[str] = None
    blank_index: int = 0

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigError("vocab tokens must be distinct")
        if self.word_delimiter is not None and self.word_delimiter not in self.tokens:
            raise ConfigError(f"word delimiter {self.word_delimiter!r} not in vocab")
        if not 0 <= self.blank_index < len(self.tokens):
            raise ConfigError("blank index outside vocab")


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 50
    n_best: int = 5
    lm_weight: float = 0.0
    word_bonus: float = 0.0
    prune_log_threshold: float = NEG_INF

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ConfigError("beam width must be positive")
        if not 1 <= self.n_best <= self.beam_width:
            raise ConfigError(
                f"n_best ({self.n_best}) must be in 1..beam_width ({self.beam_width})"
            )
        if self.lm_weight < 0:
            raise ConfigError("lm weight must be >= 0")


def collapse(label_seq: Sequence[int], vocab: Vocab) -> str:
    """Standard CTC collapse of a frame path to text.

    Adjacent repeats merge first, then blanks drop, then the word
    delimiter maps to a single space; leading/trailing spaces trim.
    """
    out: list[str] = []
    prev = None
    for cid in label_seq:
        if cid == prev:
            continue
        prev = cid
        if cid == vocab.blank_index:
            continue
        tok = vocab.tokens[cid]
        out.append(" " if tok == vocab.word_delimiter else tok)
    return "".join(out).strip()


def _render(prefix: tuple[int, ...], vocab: Vocab) -> str:
    # prefixes are already blank-free with repeats meaningful
    out = []
    for cid in prefix:
        tok = vocab.tokens[cid]
        out.append(" " if tok == vocab.word_delimiter else tok)
    return "".join(out).strip()


def ctc_brute_force(
    m: LogitMatrix, vocab: Vocab, n: int
) -> list[tuple[str, float]]:
    """Exact label marginals by enumerating every V^T frame path.

    Refuses when V**T exceeds 1e7. Returns the top n (text, log P)
    pairs, ties broken lexicographically.
    """
    t, v = m.n_frames, m.vocab_size
    if v**t > 10**7:
        raise ConfigError(f"brute force refused: {v}^{t} paths exceed 1e7")
    totals: dict[str, float] = {}
    values = m.values

    def walk(frame: int, logp: float, path: list[int]) -> None:
        if frame == t:
            text = collapse(path, vocab)
            prev = totals.get(text)
            totals[text] = logp if prev is None else np.logaddexp(prev, logp)
            return
        for cid in range(v):
            path.append(cid)
            walk(frame + 1, logp + values[frame, cid], path)
            path.pop()

    walk(0, 0.0, [])
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:n]


class _FusionScorer:
    """Incremental trigram shallow fusion over completed words."""

    def __init__(self, lm: Optional[TrigramLM], alpha: float, beta: float):
        self.lm = lm
        self.alpha = alpha
        self.beta = beta
        self._cache: dict[tuple[str, ...], float] = {(): 0.0}

    def completed(self, words: tuple[str, ...]) -> float:
        """alpha * log P of the completed words plus beta per word."""
        if words in self._cache:
            return self._cache[words]
        prev = self.completed(words[:-1])
        w = words[-1]
        score = prev + self.beta
        if self.lm is not None and self.alpha > 0:
            history = words[-3:-1]
            score += self.alpha * math.log(cond_prob(self.lm, w, history))
        self._cache[words] = score
        return score

    def final(self, words: tuple[str, ...], partial: str) -> float:
        """Finished-candidate fusion term; a trailing partial word is
        scored as UNK so unscored tails cannot bias the ranking."""
        score = self.completed(words)
        if partial:
            score += self.beta
            if self.lm is not None and self.alpha > 0:
                score += self.alpha * math.log(
                    cond_prob(self.lm, UNK, words[-2:])
                )
        return score


def _split_words(prefix: tuple[int, ...], vocab: Vocab) -> tuple[tuple[str, ...], str]:
    """Completed words and the trailing partial word of a prefix."""
    if vocab.word_delimiter is None:
        return (), "".join(vocab.tokens[c] for c in prefix)
    delim_id = vocab.tokens.index(vocab.word_delimiter)
    words: list[str] = []
    cur: list[str] = []
    for cid in prefix:
        if cid == delim_id:
            if cur:
                words.append("".join(cur))
                cur = []
        else:
            cur.append(vocab.tokens[cid])
    return tuple(words), "".join(cur)


def exact_label_logprob(
    m: LogitMatrix, core: tuple[int, ...], delim_id: Optional[int]
) -> float:
    """Exact log P over all frame paths collapsing to the label sequence
    `core` padded by any number of leading/trailing delimiter entries.

    This is the CTC forward algorithm over the usual blank/label chain,
    extended with delimiter-loop states at both ends so every label
    sequence that renders to the same stripped text is marginalized in
    one pass. `core` must not begin or end with the delimiter.
    """
    t_frames = m.n_frames
    values = m.values
    blank = m.blank_index
    n = len(core)
    if delim_id is not None and core and (core[0] == delim_id or core[-1] == delim_id):
        raise ValueError("core label sequence must be delimiter-stripped")

    # state layout: 0 = pre-blank, 1 = pre-delim (only with a delimiter),
    # then alternating label/gap-blank pairs, finally a post-delim state
    # (only for non-empty cores; for the empty core the pre states already
    # cover trailing material and a post state would double-count paths)
    has_delim = delim_id is not None
    pre_d = 1 if has_delim else None
    base = 2 if has_delim else 1
    lab = lambda u: base + 2 * u  # noqa: E731  (0-based label position)
    gap = lambda u: base + 2 * u + 1  # noqa: E731  (blank after label u)
    has_post = has_delim and n > 0
    post_d = base + 2 * n if has_post else None
    n_states = base + 2 * n + (1 if has_post else 0)

    emit = [blank] * n_states
    if has_delim:
        emit[pre_d] = delim_id
    if has_post:
        emit[post_d] = delim_id
    for u in range(n):
        emit[lab(u)] = core[u]

    def preds(s: int) -> list[int]:
        if s == 0:
            return [0] + ([pre_d] if has_delim else [])
        if has_delim and s == pre_d:
            return [pre_d, 0]
        if has_post and s == post_d:
            return [post_d, lab(n - 1), gap(n - 1)]
        u, is_gap = divmod(s - base, 2)
        if is_gap:
            out = [gap(u), lab(u)]
            if has_post and u == n - 1:
                out.append(post_d)
            return out
        out = [lab(u), gap(u - 1)] if u else [lab(0), 0]
        if u == 0 and has_delim:
            out.append(pre_d)
        if u > 0 and core[u] != core[u - 1]:
            out.append(lab(u - 1))
        return out

    pred_table = [preds(s) for s in range(n_states)]

    alpha = np.full(n_states, NEG_INF)
    alpha[0] = values[0, blank]
    if has_delim:
        alpha[pre_d] = values[0, delim_id]
    if n:
        alpha[lab(0)] = values[0, core[0]]
    for t in range(1, t_frames):
        nxt = np.full(n_states, NEG_INF)
        for s in range(n_states):
            acc = NEG_INF
            for p in pred_table[s]:
                acc = np.logaddexp(acc, alpha[p])
            if acc > NEG_INF:
                nxt[s] = acc + values[t, emit[s]]
        alpha = nxt

    if n:
        finals = [lab(n - 1), gap(n - 1)] + ([post_d] if has_post else [])
    else:
        finals = [0] + ([pre_d] if has_delim else [])
    out = NEG_INF
    for s in finals:
        out = np.logaddexp(out, alpha[s])
    return float(out)


def ctc_beam_search(
    m: LogitMatrix,
    vocab: Vocab,
    cfg: DecodeConfig = DecodeConfig(),
    lm: Optional[TrigramLM] = None,
) -> NBestList:
    """Prefix beam search returning the top n_best distinct strings.

    Deterministic: equal combined scores order lexicographically by text.
    """
    if m.vocab_size != len(vocab.tokens):
        raise ConfigError(
            f"{m.utt_id}: logits vocab size {m.vocab_size} != vocab {len(vocab.tokens)}"
        )
    if cfg.lm_weight > 0 and lm is None:
        raise ConfigError("lm_weight > 0 requires a language model")

    blank = m.blank_index
    values = m.values
    scorer = _FusionScorer(lm, cfg.lm_weight, cfg.word_bonus)
    word_split_cache: dict[tuple[int, ...], tuple[tuple[str, ...], str]] = {}

    def words_of(prefix: tuple[int, ...]) -> tuple[tuple[str, ...], str]:
        got = word_split_cache.get(prefix)
        if got is None:
            got = _split_words(prefix, vocab)
            word_split_cache[prefix] = got
        return got

    def prune_score(prefix: tuple[int, ...], pb: float, pnb: float) -> float:
        total = np.logaddexp(pb, pnb)
        completed, _ = words_of(prefix)
        return total + scorer.completed(completed)

    # beams: prefix -> (log P ending in blank, log P ending in non-blank)
    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG_INF)}

    for t in range(m.n_frames):
        frame = values[t]
        nxt: dict[tuple[int, ...], list[float]] = {}

        def add(prefix: tuple[int, ...], b: float, nb: float) -> None:
            slot = nxt.get(prefix)
            if slot is None:
                nxt[prefix] = [b, nb]
            else:
                slot[0] = np.logaddexp(slot[0], b)
                slot[1] = np.logaddexp(slot[1], nb)

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            for cid in range(m.vocab_size):
                p = frame[cid]
                if p < cfg.prune_log_threshold:
                    continue
                if cid == blank:
                    add(prefix, total + p, NEG_INF)
                elif prefix and cid == prefix[-1]:
                    # repeat: extends the same prefix without a blank,
                    # or starts a new copy after a blank boundary
                    add(prefix, NEG_INF, pnb + p)
                    add(prefix + (cid,), NEG_INF, pb + p)
                else:
                    add(prefix + (cid,), NEG_INF, total + p)

        ranked = sorted(
            nxt.items(),
            key=lambda kv: (-prune_score(kv[0], kv[1][0], kv[1][1]), kv[0]),
        )
        beams = {prefix: (b, nb) for prefix, (b, nb) in ranked[: cfg.beam_width]}

    # Finalize. The beam's internal mass is a pruning estimate; surviving
    # candidates get their exact CTC marginal from the forward algorithm,
    # which also folds in every leading/trailing-delimiter variant of the
    # same text. Distinct cores rendering to the same text (possible with
    # multi-character tokens) cover disjoint path sets, so their exact
    # marginals add.
    delim_id = (
        vocab.tokens.index(vocab.word_delimiter)
        if vocab.word_delimiter is not None
        else None
    )

    def strip_delims(prefix: tuple[int, ...]) -> tuple[int, ...]:
        if delim_id is None:
            return prefix
        lo, hi = 0, len(prefix)
        while lo < hi and prefix[lo] == delim_id:
            lo += 1
        while hi > lo and prefix[hi - 1] == delim_id:
            hi -= 1
        return prefix[lo:hi]

    by_text: dict[str, float] = {}
    fusion_by_text: dict[str, float] = {}
    seen_cores: set[tuple[int, ...]] = set()
    for prefix in beams:
        core = strip_delims(prefix)
        if core in seen_cores:
            continue
        seen_cores.add(core)
        ctc_lp = exact_label_logprob(m, core, delim_id)
        text = _render(core, vocab)
        prev = by_text.get(text)
        by_text[text] = ctc_lp if prev is None else float(np.logaddexp(prev, ctc_lp))
        if text not in fusion_by_text:
            completed, partial = words_of(core)
            fusion_by_text[text] = scorer.final(completed, partial)

    scored = sorted(
        ((text, lp + fusion_by_text[text]) for text, lp in by_text.items()),
        key=lambda kv: (-kv[1], kv[0]),
    )
    top = scored[: cfg.n_best]
    hyps = tuple(
        Hypothesis(text=text, score=score, rank=r)
        for r, (text, score) in enumerate(top, start=1)
    )
    return NBestList(utt_id=m.utt_id, hypotheses=hyps)


# ---------------------------------------------------------------------------
# CTCL logits file format (binary + text alternative)

_MAGIC = b"CTCL"
_VERSION = 1
_FLAG_RAW_LOGITS = 0x1


def save_logits(m: LogitMatrix, path: Union[str, Path]) -> None:
    """Write the binary CTCL format (always normalized log-probs)."""
    path = Path(path)
    t, v = m.values.shape
    with path.open("wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIIII", _VERSION, 0, t, v, m.blank_index))
        f.write(m.values.astype("<f4").tobytes(order="C"))


def load_logits(path: Union[str, Path], utt_id: Optional[str] = None) -> LogitMatrix:
    """Read a CTCL logits file, binary or text.

    Binary: magic "CTCL", u32 version, u32 flags (bit0 = raw logits),
    u32 T, u32 V, u32 blank_index, then T*V little-endian f32 row-major.
    Text: header "T V blank_index flags", then T whitespace-separated
    rows. Raw logits are log-softmaxed on load.
    """
    path = Path(path)
    if utt_id is None:
        utt_id = path.stem
    with path.open("rb") as f:
        head = f.read(4)
        if head == _MAGIC:
            meta = f.read(20)
            if len(meta) != 20:
                raise FormatError(f"{path}: truncated CTCL header")
            version, flags, t, v, blank_index = struct.unpack("<IIIII", meta)
            if version != _VERSION:
                raise FormatError(f"{path}: unsupported CTCL version {version}")
            payload = f.read()
            expected = t * v * 4
            if len(payload) != expected:
                raise FormatError(
                    f"{path}: payload is {len(payload)} bytes, expected {expected}"
                )
            arr = np.frombuffer(payload, dtype="<f4").reshape(t, v).astype(np.float64)
        else:
            rest = head + f.read()
            try:
                text = rest.decode("utf-8")
            except UnicodeDecodeError as e:
                raise FormatError(f"{path}: neither CTCL binary nor text") from e
            lines = [ln for ln in text.splitlines() if ln.strip()]
            if not lines:
                raise FormatError(f"{path}: empty logits file")
            try:
                t, v, blank_index, flags = (int(x) for x in lines[0].split())
            except ValueError as e:
                raise FormatError(f"{path}: bad text header {lines[0]!r}") from e
            if len(lines) - 1 != t:
                raise FormatError(f"{path}: expected {t} rows, found {len(lines) - 1}")
            try:
                arr = np.array(
                    [[float(x) for x in ln.split()] for ln in lines[1:]],
                    dtype=np.float64,
                )
            except ValueError as e:
                raise FormatError(f"{path}: non-numeric row") from e
            if arr.shape != (t, v):
                raise FormatError(
                    f"{path}: rows have wrong width (expected {v} columns)"
                )
    return make_logit_matrix(
        utt_id, arr, blank_index, raw=bool(flags & _FLAG_RAW_LOGITS)
    )


def load_vocab(
    path: Union[str, Path],
    word_delimiter: Optional[str] = None,
    blank_index: int = 0,
) -> Vocab:
    """Read a vocab file: one token per line, line number = class id."""
    with Path(path).open("r", encoding="utf-8") as f:
        tokens = tuple(line.rstrip("\n") for line in f)
    return Vocab(tokens=tokens, word_delimiter=word_delimiter, blank_index=blank_index)
