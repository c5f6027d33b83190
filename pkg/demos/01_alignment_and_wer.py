#!/usr/bin/env python3
"""Walk through tokenization, alignment, and WER on a five-best list.

A Frisian utterance with a nine-token reference: the best decoder
hypothesis carries four substitutions and one insertion, and the oracle
finds a better candidate further down the list.
"""

from gerkit import NormConfig, align, corpus_wer, oracle_select, score_pair, tokenize
from gerkit.records import make_nbest

REFERENCE = "der wiene mar sa'n tweintich minsken op de ynformaasjejûn"
FIVE_BEST = [
    ("de wine mat sa'n tweintich minsken op de ynformaasje jûn", -1.2),
    ("de wine moat sa'n tweintich minsken op de ynformaasje jûn", -1.9),
    ("de wiene mat sa'n tweintich minsken op de ynformaasje jûn", -2.0),
    ("de wiene moat sa'n tweintich minsken op de ynformaasje jûn", -2.4),
    ("de wine hat sa'n tweintich minsken op de ynformaasje jûn", -3.1),
]


def show_alignment(ref_tokens, hyp_tokens):
    a = align(ref_tokens, hyp_tokens)
    cells = []
    for op in a.ops:
        r = ref_tokens[op.ref_index] if op.ref_index is not None else "*"
        h = hyp_tokens[op.hyp_index] if op.hyp_index is not None else "*"
        tag = {"match": "", "sub": "S", "del": "D", "ins": "I"}[op.op]
        width = max(len(r), len(h), 1)
        cells.append((r.ljust(width), h.ljust(width), tag.ljust(width)))
    for label, row in zip(("REF:", "HYP:", "OP: "), zip(*cells)):
        print("   ", label, " ".join(row).rstrip())
    return a


def main():
    cfg = NormConfig()
    ref = tokenize(REFERENCE, cfg)
    print(f"reference ({len(ref)} tokens): {REFERENCE}\n")

    counts = []
    for text, _ in FIVE_BEST:
        c = score_pair(ref, tokenize(text, cfg))
        counts.append(c)
        print(f"hyp: {text}")
        print(f"  S={c.sub} D={c.del_} I={c.ins} -> per-utterance WER "
              f"{c.wer:.1f}%")
    print()

    print("alignment of the rank-1 hypothesis:")
    show_alignment(ref, tokenize(FIVE_BEST[0][0], cfg))
    print()

    nbest = make_nbest("demo", FIVE_BEST)
    idx, best = oracle_select(ref, nbest)
    print(f"oracle pick: rank {idx} with {best.errors} errors "
          f"(rank-1 has {counts[0].errors})")
    print(f"baseline WER over this one utterance: {corpus_wer([counts[0]]):.1f}%")
    print(f"oracle WER over this one utterance:   {corpus_wer([best]):.1f}%")


if __name__ == "__main__":
    main()
