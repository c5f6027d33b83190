"""Command-line entry point.

Subcommands: decode | train-lm | correct | evaluate | report. All read a
JSON experiment config (--config); --seed and --out-dir override the
corresponding config fields. Exit codes: 0 success, 2 configuration
error, 3 data error, 4 backend exhaustion.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from gerkit import report as rpt
from gerkit.ctc import ConfigError as CtcConfigError
from gerkit.ctc import FormatError
from gerkit.ngram import save_lm, train_trigram
from gerkit.records import DataError, load_manifest, load_nbest, save_records
from gerkit.report import ConfigError, ExperimentConfig, load_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4


def _load_cfg(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.out_dir:
        cfg = replace(cfg, out_dir=args.out_dir)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _nbest_out_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir) / "nbest.jsonl"


def cmd_decode(args) -> int:
    cfg = _load_cfg(args)
    nbests, meta = rpt.run_decode(cfg)
    out = _nbest_out_path(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_records(out, nbests)
    meta_path = out.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    print(f"decoded {len(nbests)} utterance(s) -> {out}")
    return EXIT_OK


def cmd_train_lm(args) -> int:
    cfg = _load_cfg(args)
    if not cfg.lm.train_corpus:
        raise ConfigError("train-lm requires lm.train_corpus in the config")
    sentences = [
        line.split()
        for line in Path(cfg.lm.train_corpus).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    lm = train_trigram(sentences, trained_on=str(cfg.lm.train_corpus))
    out = Path(cfg.lm.model) if cfg.lm.model else Path(cfg.out_dir) / "trigram.lm"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_lm(lm, out)
    print(f"trained trigram on {len(sentences)} sentence(s) -> {out}")
    return EXIT_OK


def _load_inputs(cfg: ExperimentConfig):
    utts = load_manifest(cfg.manifest)
    if cfg.nbest:
        nbests = load_nbest(cfg.nbest, n_max=cfg.decode.n_best)
    elif cfg.logits_dir:
        decoded, _ = rpt.run_decode(cfg)
        nbests = {nb.utt_id: nb for nb in decoded}
    else:
        raise ConfigError("config needs either nbest or logits_dir + vocab")
    return utts, nbests


def cmd_correct(args) -> int:
    cfg = _load_cfg(args)
    utts, nbests = _load_inputs(cfg)
    rpt._check_coverage(utts, set(nbests), "N-best file")
    records = rpt.run_corrections(
        cfg, cfg.prompt.mode,
        [nbests[u.id] for u in utts],
        {u.id: u.reference for u in utts},
    )
    out = Path(cfg.out_dir) / f"corrections_{cfg.prompt.mode}.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_records(out, records)
    n_failed = sum(1 for r in records if r.error is not None)
    print(f"corrected {len(records)} utterance(s) ({n_failed} failed) -> {out}")
    if records and n_failed == len(records):
        print("error: every backend request failed", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    utts, nbests = _load_inputs(cfg)
    report = rpt.evaluate(cfg, utts, nbests)
    written = rpt.write_report(report, cfg.out_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg_out = args.out_dir or "out"
    src = Path(args.from_json) if args.from_json else Path(cfg_out) / "report.json"
    if not src.exists():
        raise DataError(f"no report JSON at {src}")
    report = json.loads(src.read_text(encoding="utf-8"))
    written = rpt.write_report(report, cfg_out)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gerkit",
        description="N-best generative error correction and WER evaluation toolkit",
    )
    parser.add_argument("--config", help="experiment config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out-dir", default=None, help="override config output dir")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("decode", help="CTC beam search over a logits directory")
    sub.add_parser("train-lm", help="train the trigram language model")
    sub.add_parser("correct", help="run LLM correction over the N-best lists")
    sub.add_parser("evaluate", help="compute WER / sentence / edit-level reports")
    p_report = sub.add_parser("report", help="re-render reports from report.json")
    p_report.add_argument("--from-json", default=None, help="path to report.json")

    return parser


_COMMANDS = {
    "decode": cmd_decode,
    "train-lm": cmd_train_lm,
    "correct": cmd_correct,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CtcConfigError, ValueError) as e:
        # DataError subclasses ValueError; report it as a data problem
        if isinstance(e, DataError) or isinstance(e, FormatError):
            print(f"data error: {e}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
