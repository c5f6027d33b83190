"""Experiment configuration, evaluation orchestration, report emission.

Reports reproduce three shapes: a corpus WER table over the selected
systems, a sentence-level improved/degraded/unchanged table, and an
edit-level TP/FN/FP precision-recall table. Every table is emitted as
Markdown, CSV, and machine-readable JSON, carrying raw counts alongside
percentages so each number is re-derivable, plus a metadata block with
the config digest, template version, and normalization flags. Output is
deterministic: fixed system order, fixed float precision, no timestamps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from gerkit import analysis as ana
from gerkit import correction as corr
from gerkit.align import (
    EditCounts,
    NormConfig,
    corpus_error_totals,
    oracle_select,
    score_pair,
    tokenize,
)
from gerkit.ctc import DecodeConfig, ctc_beam_search, load_logits, load_vocab
from gerkit.ngram import load_lm, rescore_nbest, train_trigram
from gerkit.records import (
    CorrectionRecord,
    DataError,
    NBestList,
    Utterance,
    load_corrections,
)

log = logging.getLogger(__name__)

SYSTEMS = ("baseline", "oracle", "trigram", "llm_generation", "llm_selection")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class LMConfig:
    model: Optional[str] = None
    train_corpus: Optional[str] = None
    alpha: float = 0.5
    beta: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str = ""
    nbest: Optional[str] = None
    logits_dir: Optional[str] = None
    vocab: Optional[str] = None
    word_delimiter: Optional[str] = "|"
    blank_index: int = 0
    norm: NormConfig = field(default_factory=NormConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    prompt: corr.PromptConfig = field(default_factory=corr.PromptConfig)
    examples_path: Optional[str] = None
    backend: corr.BackendConfig = field(default_factory=corr.BackendConfig)
    systems: tuple[str, ...] = ("baseline", "oracle")
    corrections_generation: Optional[str] = None
    corrections_selection: Optional[str] = None
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.systems:
            raise ConfigError("at least one system must be selected")
        for s in self.systems:
            if s not in SYSTEMS:
                raise ConfigError(f"unknown system {s!r} (choose from {SYSTEMS})")


def load_config(path) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return config_from_dict(obj)


def config_from_dict(obj: dict) -> ExperimentConfig:
    try:
        prompt_obj = dict(obj.get("prompt", {}))
        examples_path = prompt_obj.pop("examples", None)
        return ExperimentConfig(
            manifest=obj.get("manifest", ""),
            nbest=obj.get("nbest"),
            logits_dir=obj.get("logits_dir"),
            vocab=obj.get("vocab"),
            word_delimiter=obj.get("word_delimiter", "|"),
            blank_index=obj.get("blank_index", 0),
            norm=NormConfig(**obj.get("norm", {})),
            decode=DecodeConfig(**obj.get("decode", {})),
            lm=LMConfig(**obj.get("lm", {})),
            prompt=corr.PromptConfig(**prompt_obj),
            examples_path=examples_path,
            backend=corr.BackendConfig(**obj.get("backend", {})),
            systems=tuple(obj.get("systems", ("baseline", "oracle"))),
            corrections_generation=obj.get("corrections", {}).get("generation"),
            corrections_selection=obj.get("corrections", {}).get("selection"),
            out_dir=obj.get("out_dir", "out"),
            seed=obj.get("seed", 0),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def config_digest(cfg: ExperimentConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_examples(path) -> list[corr.FewShotExample]:
    out = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(
                corr.FewShotExample(
                    nbest=tuple(obj["nbest"]), reference=obj["reference"]
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}:{lineno}: malformed example: {e}") from e
    return out


# ---------------------------------------------------------------------------
# pipeline steps


def run_decode(cfg: ExperimentConfig, lm=None) -> tuple[list[NBestList], dict]:
    """Decode every logits file in logits_dir into an N-best list."""
    if not cfg.logits_dir or not cfg.vocab:
        raise ConfigError("decode requires logits_dir and vocab")
    vocab = load_vocab(cfg.vocab, word_delimiter=cfg.word_delimiter,
                       blank_index=cfg.blank_index)
    paths = sorted(Path(cfg.logits_dir).iterdir())
    if not paths:
        raise DataError(f"no logits files in {cfg.logits_dir}")
    if cfg.decode.lm_weight > 0 and lm is None:
        lm = get_lm(cfg)
    out = []
    for p in paths:
        m = load_logits(p)
        out.append(ctc_beam_search(m, vocab, cfg.decode, lm=lm))
    meta = {
        "beam_width": cfg.decode.beam_width,
        "n_best": cfg.decode.n_best,
        "lm_weight": cfg.decode.lm_weight,
        "word_bonus": cfg.decode.word_bonus,
        "lm_fused": cfg.decode.lm_weight > 0,
    }
    return out, meta


def get_lm(cfg: ExperimentConfig):
    if cfg.lm.model and Path(cfg.lm.model).exists():
        return load_lm(cfg.lm.model)
    if cfg.lm.train_corpus:
        sentences = [
            line.split()
            for line in Path(cfg.lm.train_corpus)
            .read_text(encoding="utf-8")
            .splitlines()
            if line.strip()
        ]
        return train_trigram(sentences, trained_on=str(cfg.lm.train_corpus))
    raise ConfigError("trigram system requires lm.model or lm.train_corpus")


def run_corrections(
    cfg: ExperimentConfig,
    mode: str,
    nbests: Sequence[NBestList],
    references: dict[str, str],
) -> list[CorrectionRecord]:
    """Load corrections from file when configured, else drive the backend."""
    path = (cfg.corrections_generation if mode == "generation"
            else cfg.corrections_selection)
    if path:
        return load_corrections(path)
    pcfg = replace(cfg.prompt, mode=mode)
    examples = load_examples(cfg.examples_path) if cfg.examples_path else []
    return corr.correct_batch(nbests, pcfg, cfg.backend, examples,
                              references=references)


@dataclass
class SystemResult:
    name: str
    counts: list[EditCounts]
    texts: list[str]
    wer: float = 0.0


def _check_coverage(utts: Sequence[Utterance], ids: set[str], what: str) -> None:
    manifest_ids = {u.id for u in utts}
    missing = sorted(manifest_ids - ids)
    unknown = sorted(ids - manifest_ids)
    if missing or unknown:
        raise DataError(
            f"utterance-id mismatch with {what}: "
            f"missing={missing[:10]}{'...' if len(missing) > 10 else ''} "
            f"unknown={unknown[:10]}{'...' if len(unknown) > 10 else ''}"
        )


def evaluate(
    cfg: ExperimentConfig,
    utts: Sequence[Utterance],
    nbests: dict[str, NBestList],
    corrections: Optional[dict[str, list[CorrectionRecord]]] = None,
) -> dict:
    """Compute every selected system's metrics; returns the report dict."""
    _check_coverage(utts, set(nbests), "N-best file")
    refs_tokens = {u.id: tokenize(u.reference, cfg.norm) for u in utts}
    corrections = corrections or {}

    results: dict[str, SystemResult] = {}

    def score_system(name: str, texts: dict[str, str]) -> SystemResult:
        counts, ordered = [], []
        for u in utts:
            counts.append(score_pair(refs_tokens[u.id], tokenize(texts[u.id], cfg.norm)))
            ordered.append(texts[u.id])
        return SystemResult(name=name, counts=counts, texts=ordered)

    if "baseline" not in cfg.systems:
        # sentence/edit analysis always compares against rank-1
        log.info("baseline added implicitly for comparison tables")
    base_texts = {u.id: nbests[u.id].top.text for u in utts}
    results["baseline"] = score_system("baseline", base_texts)

    for name in cfg.systems:
        if name == "baseline":
            continue
        if name == "oracle":
            counts, texts = [], []
            for u in utts:
                idx, c = oracle_select(refs_tokens[u.id], nbests[u.id], cfg.norm)
                counts.append(c)
                texts.append(nbests[u.id].hypotheses[idx - 1].text)
            results["oracle"] = SystemResult("oracle", counts, texts)
        elif name == "trigram":
            lm = get_lm(cfg)
            texts = {
                u.id: rescore_nbest(lm, nbests[u.id], cfg.lm.alpha, cfg.lm.beta).top.text
                for u in utts
            }
            results["trigram"] = score_system("trigram", texts)
        elif name in ("llm_generation", "llm_selection"):
            mode = "generation" if name == "llm_generation" else "selection"
            recs = corrections.get(mode)
            if recs is None:
                recs = run_corrections(
                    cfg, mode, [nbests[u.id] for u in utts],
                    {u.id: u.reference for u in utts},
                )
            by_id = {r.utt_id: r for r in recs}
            _check_coverage(utts, set(by_id), f"{mode} corrections")
            texts = {u.id: by_id[u.id].corrected_text for u in utts}
            results[name] = score_system(name, texts)

    # corpus WERs
    wer_rows = {}
    for name in _ordered_systems(cfg, results):
        r = results[name]
        errors, tokens, empty = corpus_error_totals(r.counts)
        if tokens == 0:
            raise DataError("all references empty; corpus WER undefined")
        r.wer = 100.0 * errors / tokens
        wer_rows[name] = {
            "wer_pct": round(r.wer, 4),
            "errors": errors,
            "ref_tokens": tokens,
            "sub": sum(c.sub for c in r.counts),
            "del": sum(c.del_ for c in r.counts),
            "ins": sum(c.ins for c in r.counts),
        }

    # sentence-level categories and edit-level analysis vs the baseline
    base = results["baseline"]
    sentence_rows, edit_rows = {}, {}
    for name in _ordered_systems(cfg, results):
        if name == "baseline":
            continue
        r = results[name]
        categories, analyses = [], []
        for i, u in enumerate(utts):
            categories.append(
                ana.categorize_sentence(u.id, base.counts[i], r.counts[i])
            )
            analyses.append(
                ana.edit_level_analysis(
                    refs_tokens[u.id],
                    tokenize(base.texts[i], cfg.norm),
                    tokenize(r.texts[i], cfg.norm),
                )
            )
        summary = ana.aggregate(categories, analyses, {name: r.wer})
        sentence_rows[name] = {
            **{k: summary.category_counts[k] for k in ("improved", "degraded", "unchanged")},
            **{
                f"{k}_pct": round(summary.category_pct[k], 4)
                for k in ("improved", "degraded", "unchanged")
            },
        }
        edit_rows[name] = _edit_table(summary.pooled)

    _, _, n_empty = corpus_error_totals(base.counts)
    report = {
        "metadata": {
            "config_digest": config_digest(cfg),
            "template_version": cfg.prompt.template,
            "normalization": asdict(cfg.norm),
            "n_utterances": len(utts),
            "empty_reference_count": n_empty,
            "systems": list(_ordered_systems(cfg, results)),
            "seed": cfg.seed,
        },
        "wer": wer_rows,
        "sentence_categories": sentence_rows,
        "edit_analysis": edit_rows,
    }
    return report


def _ordered_systems(cfg: ExperimentConfig, results: dict) -> list[str]:
    ordered = [s for s in SYSTEMS if s in results and (s in cfg.systems or s == "baseline")]
    return ordered


def _edit_table(pooled: ana.EditAnalysis) -> dict:
    pr = ana.precision_recall(pooled)
    rows = {}
    for t in ana.ERROR_TYPES:
        p, r = pr[t]
        rows[t] = {
            "tp": pooled.tp[t], "fn": pooled.fn[t], "fp": pooled.fp[t],
            "precision": None if p is None else round(p, 4),
            "recall": None if r is None else round(r, 4),
        }
    p, r = pr["total"]
    rows["total"] = {
        "tp": pooled.total("tp"), "fn": pooled.total("fn"), "fp": pooled.total("fp"),
        "precision": None if p is None else round(p, 4),
        "recall": None if r is None else round(r, 4),
    }
    return rows


# ---------------------------------------------------------------------------
# emission


def _fmt(x) -> str:
    return "" if x is None else f"{x:.1f}"


def render_markdown(report: dict) -> str:
    md = ["# Evaluation report", ""]
    meta = report["metadata"]
    md.append("## Metadata")
    md.append("")
    for key in sorted(meta):
        md.append(f"- {key}: `{json.dumps(meta[key], sort_keys=True)}`")
    md.append("")
    md.append("## Corpus WER")
    md.append("")
    md.append("| system | WER % | errors | ref tokens | S | D | I |")
    md.append("|---|---|---|---|---|---|---|")
    for name in meta["systems"]:
        row = report["wer"][name]
        md.append(
            f"| {name} | {_fmt(row['wer_pct'])} | {row['errors']} | "
            f"{row['ref_tokens']} | {row['sub']} | {row['del']} | {row['ins']} |"
        )
    md.append("")
    if report["sentence_categories"]:
        md.append("## Sentence-level categories (vs baseline)")
        md.append("")
        md.append("| system | improved | degraded | unchanged | improved % | degraded % | unchanged % |")
        md.append("|---|---|---|---|---|---|---|")
        for name in meta["systems"]:
            if name not in report["sentence_categories"]:
                continue
            row = report["sentence_categories"][name]
            md.append(
                f"| {name} | {row['improved']} | {row['degraded']} | {row['unchanged']} | "
                f"{_fmt(row['improved_pct'])} | {_fmt(row['degraded_pct'])} | "
                f"{_fmt(row['unchanged_pct'])} |"
            )
        md.append("")
    if report["edit_analysis"]:
        md.append("## Edit-level analysis (vs baseline)")
        md.append("")
        md.append("| system | type | TP | FN | FP | precision % | recall % |")
        md.append("|---|---|---|---|---|---|---|")
        for name in meta["systems"]:
            if name not in report["edit_analysis"]:
                continue
            for t in (*ana.ERROR_TYPES, "total"):
                row = report["edit_analysis"][name][t]
                md.append(
                    f"| {name} | {t} | {row['tp']} | {row['fn']} | {row['fp']} | "
                    f"{_fmt(row['precision'])} | {_fmt(row['recall'])} |"
                )
        md.append("")
    return "\n".join(md)


def write_report(report: dict, out_dir) -> list[Path]:
    """Emit report.json, report.md, and the three CSV tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out / "report.json"
    json_path.write_text(
        json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    written.append(json_path)

    md_path = out / "report.md"
    md_path.write_text(render_markdown(report), encoding="utf-8")
    written.append(md_path)

    systems = report["metadata"]["systems"]

    wer_path = out / "wer.csv"
    with wer_path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["system", "wer_pct", "errors", "ref_tokens", "sub", "del", "ins"])
        for name in systems:
            row = report["wer"][name]
            w.writerow([name, _fmt(row["wer_pct"]), row["errors"],
                        row["ref_tokens"], row["sub"], row["del"], row["ins"]])
    written.append(wer_path)

    sent_path = out / "sentences.csv"
    with sent_path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["system", "improved", "degraded", "unchanged",
                    "improved_pct", "degraded_pct", "unchanged_pct"])
        for name in systems:
            if name not in report["sentence_categories"]:
                continue
            row = report["sentence_categories"][name]
            w.writerow([name, row["improved"], row["degraded"], row["unchanged"],
                        _fmt(row["improved_pct"]), _fmt(row["degraded_pct"]),
                        _fmt(row["unchanged_pct"])])
    written.append(sent_path)

    edit_path = out / "edits.csv"
    with edit_path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["system", "type", "tp", "fn", "fp", "precision", "recall"])
        for name in systems:
            if name not in report["edit_analysis"]:
                continue
            for t in (*ana.ERROR_TYPES, "total"):
                row = report["edit_analysis"][name][t]
                w.writerow([name, t, row["tp"], row["fn"], row["fp"],
                            _fmt(row["precision"]), _fmt(row["recall"])])
    written.append(edit_path)
    return written
