#!/usr/bin/env python3
"""Train the Witten-Bell trigram model on the bundled synthetic corpus
and use it to re-rank an N-best list.

The interesting bit: a hypothesis whose words the LM has seen outranks
an acoustically tied twin containing an out-of-vocabulary misspelling.
"""

from pathlib import Path

from gerkit.ngram import cond_prob, rescore_nbest, sentence_logprob, train_trigram
from gerkit.records import make_nbest

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures"


def main():
    lines = (FIXTURES / "lm_corpus.txt").read_text(encoding="utf-8").splitlines()
    corpus = [line.split() for line in lines if line.strip()]
    lm = train_trigram(corpus, trained_on="bundled synthetic corpus")
    print(f"trained on {len(corpus)} sentences, vocabulary {len(lm.vocab)} words\n")

    for history in [(), ("de",), ("de", "man")]:
        top = sorted(lm.vocab, key=lambda w: -cond_prob(lm, w, history))[:3]
        shown = ", ".join(f"{w} ({cond_prob(lm, w, history):.3f})" for w in top)
        print(f"most likely after {' '.join(history) or '<start>'}: {shown}")

    print()
    known = "de man rint troch it doarp"
    misspelled = "de man rynt troch it doarp"
    print(f"log P({known!r})      = {sentence_logprob(lm, known.split()):8.3f}")
    print(f"log P({misspelled!r}) = {sentence_logprob(lm, misspelled.split()):8.3f}")

    nbest = make_nbest("demo", [(misspelled, -4.0), (known, -4.0)])
    rescored = rescore_nbest(lm, nbest, alpha=0.5, beta=1.0)
    print("\nafter rescoring (alpha=0.5, beta=1.0):")
    for h in rescored.hypotheses:
        print(f"  rank {h.rank}: {h.text}  (combined {h.score:.3f})")


if __name__ == "__main__":
    main()
