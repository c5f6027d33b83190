import math
import random

import pytest

from gerkit.ngram import (
    BOS,
    EOS,
    UNK,
    cond_prob,
    load_lm,
    rescore_nbest,
    save_lm,
    sentence_logprob,
    train_trigram,
)
from gerkit.records import make_nbest


def random_corpus(rng, n_sentences=1000, n_words=50, max_len=12):
    lexicon = [f"w{i}" for i in range(n_words)]
    return [
        [rng.choice(lexicon) for _ in range(rng.randint(1, max_len))]
        for _ in range(n_sentences)
    ]


def support(lm):
    return sorted(lm.vocab | {UNK, EOS})


class TestTrain:
    def test_observed_beats_unseen(self):
        lm = train_trigram([["a", "b"], ["a", "b"]])
        assert cond_prob(lm, "b", (BOS, "a")) > cond_prob(lm, UNK, (BOS, "a"))

    def test_single_word_corpus_normalizes(self):
        lm = train_trigram([["a"]])
        total = sum(cond_prob(lm, w, (BOS, BOS)) for w in support(lm))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            train_trigram([])
        with pytest.raises(ValueError):
            train_trigram([[], []])

    def test_min_count_maps_rare_words_to_unk(self):
        lm = train_trigram([["a", "a", "rare"]], min_count=2)
        assert "rare" not in lm.vocab and "a" in lm.vocab

    def test_normalization_sweep_random_corpus(self):
        rng = random.Random(42)
        lm = train_trigram(random_corpus(rng, n_sentences=200, n_words=20))
        words = support(lm)
        for _ in range(30):
            order = rng.randint(0, 2)
            hist = tuple(rng.choice(words[:-1]) for _ in range(order))
            total = sum(cond_prob(lm, w, hist) for w in words)
            assert total == pytest.approx(1.0, abs=1e-9), hist


class TestCondProb:
    def test_hand_computed_witten_bell_on_aaa(self):
        # corpus "a a a": events (BOS,BOS)->a, (BOS,a)->a, (a,a)->a, (a,a)->EOS
        # unigram: lam = 4/6, P1(a) = (2/3)(3/4) + (1/3)(1/3)      = 11/18
        # bigram (a,): lam = 3/5, P2(a|a) = (3/5)(2/3) + (2/5)P1   = 29/45
        # trigram (a,a): lam = 2/4, P3(a|a,a) = (1/2)(1/2) + (1/2)P2 = 103/180
        lm = train_trigram([["a", "a", "a"]])
        assert cond_prob(lm, "a", ()) == pytest.approx(11 / 18, abs=1e-12)
        assert cond_prob(lm, "a", ("a",)) == pytest.approx(29 / 45, abs=1e-12)
        assert cond_prob(lm, "a", ("a", "a")) == pytest.approx(103 / 180, abs=1e-12)
        assert cond_prob(lm, "a", ("a", "a")) > 0.5

    def test_unseen_history_backs_off_exactly(self):
        lm = train_trigram([["a", "b", "c"], ["b", "c", "a"]])
        # history (c, b) was never observed as a trigram context
        assert ("c", "b") not in lm._tri_hist
        for w in support(lm):
            assert cond_prob(lm, w, ("c", "b")) == pytest.approx(
                cond_prob(lm, w, ("b",)), abs=0
            )

    def test_unknown_words_map_to_unk(self):
        lm = train_trigram([["a", "b"]])
        assert cond_prob(lm, "zzz", ("a",)) == cond_prob(lm, UNK, ("a",))
        assert cond_prob(lm, "b", ("zzz", "a")) == cond_prob(lm, "b", (UNK, "a"))

    def test_everything_has_support(self):
        lm = train_trigram([["a", "b"]])
        for w in support(lm):
            for hist in ((), ("a",), ("a", "b"), (UNK, UNK)):
                assert cond_prob(lm, w, hist) > 0.0


class TestSentenceLogprob:
    def test_empty_sentence_is_eos_term(self):
        lm = train_trigram([["a", "b"]])
        assert sentence_logprob(lm, []) == pytest.approx(
            math.log(cond_prob(lm, EOS, (BOS, BOS)))
        )

    def test_decomposes_into_conditional_terms(self):
        lm = train_trigram([["a", "b", "a"], ["b", "a"]])
        tokens = ["a", "b"]
        expected = (
            math.log(cond_prob(lm, "a", (BOS, BOS)))
            + math.log(cond_prob(lm, "b", (BOS, "a")))
            + math.log(cond_prob(lm, EOS, ("a", "b")))
        )
        assert sentence_logprob(lm, tokens) == pytest.approx(expected)

    def test_training_sentences_usually_beat_their_permutations(self):
        rng = random.Random(2024)
        corpus = random_corpus(rng, n_sentences=100, n_words=30, max_len=8)
        lm = train_trigram(corpus)
        wins = trials = 0
        for sent in corpus:
            if len(set(sent)) < 2:
                continue
            shuffled = sent[:]
            while shuffled == sent:
                rng.shuffle(shuffled)
            trials += 1
            if sentence_logprob(lm, sent) >= sentence_logprob(lm, shuffled):
                wins += 1
        assert trials > 50
        assert wins / trials >= 0.9


class TestRescore:
    def test_zero_weights_is_identity(self):
        lm = train_trigram([["a"]])
        nb = make_nbest("u", [("x y", -1.0), ("y x", -1.0), ("z", -2.0)])
        out = rescore_nbest(lm, nb, alpha=0.0, beta=0.0)
        assert [h.text for h in out.hypotheses] == [h.text for h in nb.hypotheses]

    def test_large_alpha_promotes_training_sentence(self):
        lm = train_trigram([["de", "kat", "sliept"]] * 5)
        nb = make_nbest("u", [("di kot slypt", -1.0), ("de kat sliept", -1.5)])
        out = rescore_nbest(lm, nb, alpha=100.0, beta=0.0)
        assert out.top.text == "de kat sliept"

    def test_in_vocabulary_twin_outranks_out_of_vocabulary_twin(self):
        # mirrors fixing "wine" -> "wiene": the LM knows wiene but not wine
        corpus = [
            "der wiene in protte minsken".split(),
            "wiene jim der ek".split(),
            "de minsken wiene bliid".split(),
        ]
        lm = train_trigram(corpus)
        nb = make_nbest("u", [
            ("de wine moat sa'n tweintich", -2.0),
            ("de wiene moat sa'n tweintich", -2.0),
        ])
        out = rescore_nbest(lm, nb, alpha=1.0, beta=0.0)
        assert out.top.text == "de wiene moat sa'n tweintich"


class TestSerialization:
    def test_round_trip_preserves_cond_prob(self, tmp_path):
        rng = random.Random(7)
        lm = train_trigram(random_corpus(rng, n_sentences=60, n_words=15),
                           trained_on="synthetic")
        path = tmp_path / "model.lm"
        save_lm(lm, path)
        lm2 = load_lm(path)
        assert lm2.trained_on == "synthetic"
        words = support(lm)
        for _ in range(100):
            w = rng.choice(words)
            hist = tuple(rng.choice(words) for _ in range(rng.randint(0, 2)))
            assert cond_prob(lm2, w, hist) == cond_prob(lm, w, hist)

    def test_retrain_same_corpus_gives_identical_file(self, tmp_path):
        corpus = [["a", "b", "c"], ["c", "b"]]
        p1, p2 = tmp_path / "m1.lm", tmp_path / "m2.lm"
        save_lm(train_trigram(corpus), p1)
        save_lm(train_trigram(corpus), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "junk.lm"
        p.write_text("not a model\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_lm(p)
