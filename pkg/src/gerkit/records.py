"""Corpus records and the line-delimited files the pipeline exchanges.

All on-disk formats are JSON Lines (one record per line, UTF-8) so files
stream, diff, and append cleanly:

    manifest     {"id", "reference", "split"?, "duration_s"?}
    n-best       {"utt_id", "hypotheses": [{"text", "score"}]}
    corrections  serialized CorrectionRecord

Readers validate invariants on load; writers round-trip exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional, Union

log = logging.getLogger(__name__)

Split = Literal["train", "validation", "test"]
_SPLITS = ("train", "validation", "test")

CorrectionMode = Literal["generation", "selection"]
ParseStatus = Literal["ok", "fallback"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Utterance:
    """One evaluation unit: id plus reference transcript."""

    id: str
    reference: str
    split: Optional[Split] = None
    duration_s: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("utterance id must be non-empty")
        if self.split is not None and self.split not in _SPLITS:
            raise DataError(f"unknown split {self.split!r} for utterance {self.id}")
        if self.duration_s is not None and self.duration_s < 0:
            raise DataError(f"negative duration for utterance {self.id}")

    @property
    def empty_reference(self) -> bool:
        """True when the reference has no word tokens."""
        return not self.reference.split()


@dataclass(frozen=True)
class Hypothesis:
    text: str
    score: float = 0.0
    rank: int = 1


@dataclass(frozen=True)
class NBestList:
    """Ranked hypotheses for one utterance, best first.

    Ranks are 1..N consecutive and scores are non-increasing with rank.
    """

    utt_id: str
    hypotheses: tuple[Hypothesis, ...]

    def __post_init__(self) -> None:
        if not self.hypotheses:
            raise DataError(f"N-best list for {self.utt_id!r} is empty")
        for pos, hyp in enumerate(self.hypotheses, start=1):
            if hyp.rank != pos:
                raise DataError(
                    f"{self.utt_id}: rank {hyp.rank} at position {pos}; ranks must be 1..N"
                )
            if pos > 1 and hyp.score > self.hypotheses[pos - 2].score:
                raise DataError(
                    f"{self.utt_id}: scores must be non-increasing with rank"
                )

    @property
    def top(self) -> Hypothesis:
        return self.hypotheses[0]


def make_nbest(
    utt_id: str, scored_texts: Iterable[tuple[str, float]]
) -> NBestList:
    """Build a valid NBestList from (text, score) pairs.

    Pairs are sorted by score descending with the input order as the
    tiebreak, then ranks are rewritten 1..N.
    """
    pairs = list(scored_texts)
    order = sorted(range(len(pairs)), key=lambda i: (-pairs[i][1], i))
    hyps = tuple(
        Hypothesis(text=pairs[i][0], score=pairs[i][1], rank=r)
        for r, i in enumerate(order, start=1)
    )
    return NBestList(utt_id=utt_id, hypotheses=hyps)


@dataclass(frozen=True)
class CorrectionRecord:
    """One LLM interaction: prompt digest, raw response, parsed output."""

    utt_id: str
    mode: CorrectionMode
    shots: int
    prompt_hash: str
    raw_response: str
    corrected_text: str
    selected_index: Optional[int] = None
    parse_status: ParseStatus = "ok"
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mode not in ("generation", "selection"):
            raise DataError(f"unknown correction mode {self.mode!r}")
        if self.shots < 0:
            raise DataError("shots must be >= 0")
        if self.mode == "selection" and self.selected_index is None:
            raise DataError(f"{self.utt_id}: selection record lacks selected_index")
        if self.parse_status not in ("ok", "fallback"):
            raise DataError(f"unknown parse status {self.parse_status!r}")


# ---------------------------------------------------------------------------
# JSONL readers / writers


def _iter_jsonl(path: Union[str, Path]):
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: malformed record: {e}") from e


def load_manifest(path: Union[str, Path]) -> list[Utterance]:
    """Read utterances in file order; duplicate ids are rejected."""
    out: list[Utterance] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            utt = Utterance(
                id=obj["id"],
                reference=obj["reference"],
                split=obj.get("split"),
                duration_s=obj.get("duration_s"),
            )
        except (KeyError, TypeError, DataError) as e:
            raise DataError(f"{path}:{lineno}: {e}") from e
        if utt.id in seen:
            raise DataError(
                f"{path}:{lineno}: duplicate utterance id {utt.id!r} "
                f"(first seen on line {seen[utt.id]})"
            )
        seen[utt.id] = lineno
        out.append(utt)
    return out


def load_nbest(
    path: Union[str, Path], n_max: int = 5, strict: bool = False
) -> dict[str, NBestList]:
    """Read N-best records keyed by utterance id.

    Hypotheses are re-sorted by score descending (original order breaks
    ties) and ranks rewritten 1..N, so the output satisfies the NBestList
    invariants regardless of input ordering. Records with more than n_max
    hypotheses error out in strict mode and are truncated with a warning
    otherwise.
    """
    out: dict[str, NBestList] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            utt_id = obj["utt_id"]
            raw = obj["hypotheses"]
            pairs = [(h["text"], float(h.get("score", 0.0))) for h in raw]
        except (KeyError, TypeError) as e:
            raise DataError(f"{path}:{lineno}: malformed N-best record: {e}") from e
        if utt_id in out:
            raise DataError(f"{path}:{lineno}: duplicate N-best record for {utt_id!r}")
        if not pairs:
            raise DataError(f"{path}:{lineno}: empty hypothesis list for {utt_id!r}")
        nbest = make_nbest(utt_id, pairs)
        if len(nbest.hypotheses) > n_max:
            if strict:
                raise DataError(
                    f"{path}:{lineno}: {len(nbest.hypotheses)} hypotheses for "
                    f"{utt_id!r} exceeds N={n_max}"
                )
            log.warning(
                "%s:%d: truncating %d hypotheses to N=%d for %s",
                path, lineno, len(nbest.hypotheses), n_max, utt_id,
            )
            nbest = NBestList(utt_id, nbest.hypotheses[:n_max])
        out[utt_id] = nbest
    return out


def load_corrections(path: Union[str, Path]) -> list[CorrectionRecord]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        try:
            out.append(CorrectionRecord(**obj))
        except (TypeError, DataError) as e:
            raise DataError(f"{path}:{lineno}: malformed correction record: {e}") from e
    return out


def _record_to_obj(record) -> dict:
    if isinstance(record, Utterance):
        obj: dict = {"id": record.id, "reference": record.reference}
        if record.split is not None:
            obj["split"] = record.split
        if record.duration_s is not None:
            obj["duration_s"] = record.duration_s
        return obj
    if isinstance(record, NBestList):
        return {
            "utt_id": record.utt_id,
            "hypotheses": [{"text": h.text, "score": h.score} for h in record.hypotheses],
        }
    if isinstance(record, CorrectionRecord):
        return {
            "utt_id": record.utt_id,
            "mode": record.mode,
            "shots": record.shots,
            "prompt_hash": record.prompt_hash,
            "raw_response": record.raw_response,
            "corrected_text": record.corrected_text,
            "selected_index": record.selected_index,
            "parse_status": record.parse_status,
            "error": record.error,
        }
    raise TypeError(f"cannot serialize {type(record).__name__}")


def save_records(path: Union[str, Path], records: Iterable) -> int:
    """Write records as JSONL; returns the number written.

    Re-reading with the matching loader yields equal records.
    """
    path = Path(path)
    count = 0
    try:
        with path.open("w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(_record_to_obj(record), ensure_ascii=False))
                f.write("\n")
                count += 1
    except OSError as e:
        raise OSError(f"cannot write records to {path}: {e}") from e
    return count
