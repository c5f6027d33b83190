#!/usr/bin/env python3
"""Run the LLM correction stage on the bundled fixture with offline
backends and inspect the records it produces.

mock_echo stands in for a model that parrots the top hypothesis,
mock_oracle for a perfect corrector; swapping in the http_chat backend
pointed at a chat-completions endpoint is a config change.
"""

import tempfile
from pathlib import Path

from gerkit.correction import BackendConfig, PromptConfig, build_prompt, correct_batch
from gerkit.records import load_manifest, load_nbest
from gerkit.report import load_examples

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures"


def main():
    utts = load_manifest(FIXTURES / "manifest.jsonl")
    nbests = load_nbest(FIXTURES / "nbest.jsonl")
    examples = load_examples(FIXTURES / "examples.jsonl")
    ordered = [nbests[u.id] for u in utts]
    references = {u.id: u.reference for u in utts}

    pcfg = PromptConfig(mode="generation", shots=3)
    print("=== rendered 3-shot prompt for the first utterance ===")
    print(build_prompt(ordered[0], pcfg, examples))
    print("=" * 55, "\n")

    with tempfile.TemporaryDirectory() as cache:
        for kind in ("mock_echo", "mock_oracle"):
            bcfg = BackendConfig(kind=kind, cache_dir=f"{cache}/{kind}")
            records = correct_batch(ordered, pcfg, bcfg, examples,
                                    references=references)
            changed = sum(
                1 for r, nb in zip(records, ordered)
                if r.corrected_text != nb.top.text
            )
            print(f"{kind}: {len(records)} records, {changed} differ from rank-1")
            sample = records[0]
            print(f"  e.g. {sample.utt_id}: {sample.corrected_text!r} "
                  f"(parse {sample.parse_status}, prompt "
                  f"{sample.prompt_hash[:12]}...)")


if __name__ == "__main__":
    main()
