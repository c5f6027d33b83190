import random

import pytest

from gerkit.align import (
    EditCounts,
    NormConfig,
    align,
    corpus_wer,
    oracle_select,
    score_pair,
    tokenize,
    wer_counts,
)
from gerkit.records import make_nbest

# Frisian worked example used throughout: a 9-token reference and the
# five-best decoder outputs for the same utterance.
REF = "der wiene mar sa'n tweintich minsken op de ynformaasjejûn"
FIVE_BEST = [
    "de wine mat sa'n tweintich minsken op de ynformaasje jûn",
    "de wine moat sa'n tweintich minsken op de ynformaasje jûn",
    "de wiene mat sa'n tweintich minsken op de ynformaasje jûn",
    "de wiene moat sa'n tweintich minsken op de ynformaasje jûn",
    "de wine hat sa'n tweintich minsken op de ynformaasje jûn",
]


def reference_edit_distance(ref, hyp):
    """Textbook Wagner-Fischer DP, cost only. Independent oracle."""
    n, m = len(ref), len(hyp)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cur[j] = min(
                prev[j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1),
                prev[j] + 1,
                cur[j - 1] + 1,
            )
        prev = cur
    return prev[m]


class TestTokenize:
    def test_whitespace_collapse(self):
        assert tokenize("der  wiene\tmar") == ["der", "wiene", "mar"]

    def test_empty(self):
        assert tokenize("") == []

    def test_apostrophe_survives_lowercasing(self):
        assert tokenize("Sa'n", NormConfig(lowercase=True)) == ["sa'n"]

    def test_nfc_unifies_decomposed_accents(self):
        decomposed = "jûn"  # u + combining circumflex
        assert tokenize(decomposed) == ["jûn"]
        assert tokenize(decomposed) == tokenize("jûn")

    def test_punct_strip_is_opt_in(self):
        cfg = NormConfig(strip_punct=".,")
        assert tokenize("wol, goed.", cfg) == ["wol", "goed"]
        assert tokenize("wol, goed.") == ["wol,", "goed."]

    def test_deterministic(self):
        cfg = NormConfig(lowercase=True, strip_punct=".")
        text = "Dit IS  in test."
        assert tokenize(text, cfg) == tokenize(text, cfg)


class TestAlign:
    def test_identity(self):
        a = align(["a", "b"], ["a", "b"])
        assert [o.op for o in a.ops] == ["match", "match"]
        assert a.cost == 0

    def test_single_deletion(self):
        a = align(["a"], [])
        assert [o.op for o in a.ops] == ["del"]
        assert a.cost == 1

    def test_worked_example_top_hypothesis(self):
        # 4 substitutions (ref indices 0, 1, 2, 8) plus one insertion
        ref, hyp = tokenize(REF), tokenize(FIVE_BEST[0])
        assert len(ref) == 9 and len(hyp) == 10
        a = align(ref, hyp)
        assert a.cost == 5
        subs = [o.ref_index for o in a.ops if o.op == "sub"]
        assert subs == [0, 1, 2, 8]
        ins = [hyp[o.hyp_index] for o in a.ops if o.op == "ins"]
        assert ins == ["jûn"]

    def test_worked_example_all_hypotheses(self):
        ref = tokenize(REF)
        expected = [(4, 0, 1), (4, 0, 1), (3, 0, 1), (3, 0, 1), (4, 0, 1)]
        for hyp_text, (s, d, i) in zip(FIVE_BEST, expected):
            c = score_pair(ref, tokenize(hyp_text))
            assert (c.sub, c.del_, c.ins) == (s, d, i), hyp_text

    def test_canonical_tie_break_prefers_early_diagonal(self):
        # both del-then-match and sub-then-del are optimal for this pair;
        # the canonical path must be del @0 then match
        a = align(["a", "b"], ["b"])
        assert [(o.op, o.ref_index) for o in a.ops] == [("del", 0), ("match", 1)]

    def test_cost_matches_reference_dp_on_random_pairs(self):
        rng = random.Random(1234)
        alphabet = list("abcdef")
        for _ in range(500):
            ref = [rng.choice(alphabet) for _ in range(rng.randint(0, 12))]
            hyp = [rng.choice(alphabet) for _ in range(rng.randint(0, 12))]
            assert align(ref, hyp).cost == reference_edit_distance(ref, hyp)

    def test_count_symmetry_on_random_pairs(self):
        rng = random.Random(99)
        alphabet = list("abcd")
        for _ in range(200):
            ref = [rng.choice(alphabet) for _ in range(rng.randint(0, 10))]
            hyp = [rng.choice(alphabet) for _ in range(rng.randint(0, 10))]
            fwd = score_pair(ref, hyp)
            rev = score_pair(hyp, ref)
            assert fwd.del_ == rev.ins
            assert fwd.ins == rev.del_
            assert fwd.sub == rev.sub

    def test_determinism(self):
        ref, hyp = tokenize(REF), tokenize(FIVE_BEST[0])
        assert align(ref, hyp) == align(ref, hyp)


class TestWerCounts:
    def test_identity_alignment(self):
        tokens = tokenize(REF)
        c = wer_counts(align(tokens, tokens), 9)
        assert c == EditCounts(n_ref=9, match=9)
        assert c.wer == 0.0

    def test_worked_example_counts(self):
        c = score_pair(tokenize(REF), tokenize(FIVE_BEST[0]))
        assert c == EditCounts(n_ref=9, sub=4, del_=0, ins=1, match=5)
        assert c.wer == pytest.approx(100 * 5 / 9)

    def test_empty_reference_flagged(self):
        c = score_pair([], ["a", "b"])
        assert c.n_ref == 0 and c.ins == 2
        assert c.wer is None

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            EditCounts(n_ref=3, sub=1, match=1)


class TestCorpusWer:
    def test_error_sum_over_token_sum(self):
        counts = [
            EditCounts(n_ref=10, sub=1, match=9),
            EditCounts(n_ref=10, sub=3, match=7),
        ]
        assert corpus_wer(counts) == pytest.approx(20.0)

    def test_single_utterance_rounds_to_55_6(self):
        c = EditCounts(n_ref=9, sub=4, ins=1, match=5)
        assert f"{corpus_wer([c]):.1f}" == "55.6"

    def test_zero_errors(self):
        assert corpus_wer([EditCounts(n_ref=4, match=4)]) == 0.0

    def test_empty_references_excluded_with_warning(self, caplog):
        counts = [
            EditCounts(n_ref=0, ins=5),
            EditCounts(n_ref=10, sub=1, match=9),
        ]
        with caplog.at_level("WARNING"):
            assert corpus_wer(counts) == pytest.approx(10.0)
        assert "excluded 1" in caplog.text

    def test_all_empty_raises(self):
        with pytest.raises(ValueError):
            corpus_wer([EditCounts(n_ref=0, ins=1)])


class TestOracleSelect:
    def test_verbatim_reference_wins(self):
        nb = make_nbest("u1", [("wat in dei", -1.0), ("der wiene", -2.0)])
        idx, counts = oracle_select(["der", "wiene"], nb)
        assert idx == 2 and counts.errors == 0

    def test_worked_example_picks_lowest_ranked_minimum(self):
        nb = make_nbest("u1", [(t, -float(i)) for i, t in enumerate(FIVE_BEST)])
        idx, counts = oracle_select(tokenize(REF), nb)
        # hypotheses 3 and 4 tie at 4 errors; lowest rank wins
        assert idx == 3
        assert counts.errors == 4
        per_hyp = [
            score_pair(tokenize(REF), tokenize(t)).errors for t in FIVE_BEST
        ]
        assert per_hyp == [5, 5, 4, 4, 5]

    def test_single_hypothesis(self):
        nb = make_nbest("u1", [("alles mis", -1.0)])
        idx, _ = oracle_select(["goed"], nb)
        assert idx == 1

    def test_oracle_never_worse_than_any_fixed_index(self):
        rng = random.Random(7)
        vocab = ["ik", "sjoch", "de", "see", "hjoed", "moarn", "wer"]
        refs, nbests = [], []
        for u in range(50):
            ref = [rng.choice(vocab) for _ in range(rng.randint(1, 8))]
            hyps = []
            for k in range(5):
                hyp = [
                    (rng.choice(vocab) if rng.random() < 0.3 else w) for w in ref
                ]
                hyps.append((" ".join(hyp), -float(k)))
            refs.append(ref)
            nbests.append(make_nbest(f"u{u}", hyps))
        oracle_counts = [oracle_select(r, nb)[1] for r, nb in zip(refs, nbests)]
        oracle = corpus_wer(oracle_counts)
        for fixed in range(5):
            fixed_counts = [
                score_pair(r, tokenize(nb.hypotheses[fixed].text))
                for r, nb in zip(refs, nbests)
            ]
            assert oracle <= corpus_wer(fixed_counts) + 1e-12
