#!/usr/bin/env python3
"""End-to-end evaluation on the bundled 20-utterance fixture.

Scores the baseline, the five-best oracle, a trigram rescoring run, and
two mock LLM runs, then prints the Markdown report. The same thing is
available from the command line:

    gerkit --config <config.json> evaluate
"""

import tempfile
from pathlib import Path

from gerkit.records import load_manifest, load_nbest
from gerkit.report import config_from_dict, evaluate, render_markdown

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures"


def main():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = config_from_dict({
            "manifest": str(FIXTURES / "manifest.jsonl"),
            "nbest": str(FIXTURES / "nbest.jsonl"),
            "lm": {"train_corpus": str(FIXTURES / "lm_corpus.txt"),
                   "alpha": 0.5, "beta": 1.0},
            "prompt": {"mode": "generation", "shots": 0},
            "backend": {"kind": "mock_oracle", "cache_dir": f"{tmp}/cache"},
            "systems": ["baseline", "oracle", "trigram", "llm_generation"],
            "out_dir": tmp,
            "seed": 0,
        })
        utts = load_manifest(cfg.manifest)
        nbests = load_nbest(cfg.nbest)
        report = evaluate(cfg, utts, nbests)

    print(render_markdown(report))
    wer = report["wer"]
    print("summary: baseline {:.1f}% | oracle {:.1f}% | trigram {:.1f}% | "
          "mock-oracle LLM {:.1f}%".format(
              wer["baseline"]["wer_pct"], wer["oracle"]["wer_pct"],
              wer["trigram"]["wer_pct"], wer["llm_generation"]["wer_pct"]))


if __name__ == "__main__":
    main()
