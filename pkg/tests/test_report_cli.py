import json
from pathlib import Path

import numpy as np
import pytest

from gerkit.cli import main
from gerkit.ctc import make_logit_matrix, save_logits
from gerkit.records import load_manifest, load_nbest
from gerkit.report import (
    ConfigError,
    config_digest,
    config_from_dict,
    evaluate,
    write_report,
)

FIXTURES = Path(__file__).parent / "fixtures"


def base_config(tmp_path, **overrides):
    cfg = {
        "manifest": str(FIXTURES / "manifest.jsonl"),
        "nbest": str(FIXTURES / "nbest.jsonl"),
        "prompt": {"mode": "generation", "shots": 0,
                   "examples": str(FIXTURES / "examples.jsonl")},
        "backend": {"kind": "mock_echo", "cache_dir": str(tmp_path / "cache")},
        "systems": ["baseline", "oracle", "llm_generation"],
        "out_dir": str(tmp_path / "out"),
        "seed": 0,
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return p


class TestEvaluate:
    def load_inputs(self, cfg):
        utts = load_manifest(cfg.manifest)
        nbests = load_nbest(cfg.nbest)
        return utts, nbests

    def test_echo_equals_baseline_exactly(self, tmp_path):
        cfg = config_from_dict(base_config(tmp_path))
        report = evaluate(cfg, *self.load_inputs(cfg))
        assert report["wer"]["llm_generation"] == report["wer"]["baseline"]
        sent = report["sentence_categories"]["llm_generation"]
        assert sent["unchanged"] == report["metadata"]["n_utterances"]

    def test_oracle_backend_reaches_zero_wer(self, tmp_path):
        cfg = config_from_dict(base_config(
            tmp_path, backend={"kind": "mock_oracle",
                               "cache_dir": str(tmp_path / "c2")}))
        report = evaluate(cfg, *self.load_inputs(cfg))
        assert report["wer"]["llm_generation"]["wer_pct"] == 0.0
        sent = report["sentence_categories"]["llm_generation"]
        assert sent["degraded"] == 0
        pr = report["edit_analysis"]["llm_generation"]["total"]
        assert pr["recall"] == 100.0 and pr["fn"] == 0 and pr["fp"] == 0

    def test_identity_backend_is_all_unchanged(self, tmp_path):
        cfg = config_from_dict(base_config(
            tmp_path,
            systems=["baseline", "llm_selection"],
            backend={"kind": "identity", "cache_dir": str(tmp_path / "c3")},
        ))
        report = evaluate(cfg, *self.load_inputs(cfg))
        sent = report["sentence_categories"]["llm_selection"]
        assert sent["unchanged"] == 20
        assert sent["unchanged_pct"] == 100.0

    def test_trigram_system_runs_from_corpus(self, tmp_path):
        cfg = config_from_dict(base_config(
            tmp_path,
            systems=["baseline", "trigram"],
            lm={"train_corpus": str(FIXTURES / "lm_corpus.txt"),
                "alpha": 0.5, "beta": 1.0},
        ))
        report = evaluate(cfg, *self.load_inputs(cfg))
        assert "trigram" in report["wer"]
        assert report["wer"]["trigram"]["ref_tokens"] == \
            report["wer"]["baseline"]["ref_tokens"]

    def test_id_mismatch_lists_offenders(self, tmp_path):
        cfg = config_from_dict(base_config(tmp_path))
        utts, nbests = self.load_inputs(cfg)
        del nbests["utt-003"]
        with pytest.raises(Exception, match="utt-003"):
            evaluate(cfg, utts, nbests)

    def test_config_digest_stable_and_sensitive(self, tmp_path):
        a = config_from_dict(base_config(tmp_path))
        b = config_from_dict(base_config(tmp_path))
        c = config_from_dict(base_config(tmp_path, seed=7))
        assert config_digest(a) == config_digest(b)
        assert config_digest(a) != config_digest(c)

    def test_at_least_one_system_required(self, tmp_path):
        with pytest.raises(ConfigError):
            config_from_dict(base_config(tmp_path, systems=[]))
        with pytest.raises(ConfigError):
            config_from_dict(base_config(tmp_path, systems=["nonsense"]))


class TestReportEmission:
    def test_all_formats_written_and_stable(self, tmp_path):
        cfg = config_from_dict(base_config(tmp_path))
        report = evaluate(cfg, load_manifest(cfg.manifest), load_nbest(cfg.nbest))
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        files1 = write_report(report, out1)
        report2 = evaluate(cfg, load_manifest(cfg.manifest), load_nbest(cfg.nbest))
        files2 = write_report(report2, out2)
        names = sorted(p.name for p in files1)
        assert names == ["edits.csv", "report.json", "report.md",
                         "sentences.csv", "wer.csv"]
        for p1, p2 in zip(sorted(files1), sorted(files2)):
            assert p1.read_bytes() == p2.read_bytes()

    def test_report_embeds_metadata(self, tmp_path):
        cfg = config_from_dict(base_config(tmp_path))
        report = evaluate(cfg, load_manifest(cfg.manifest), load_nbest(cfg.nbest))
        meta = report["metadata"]
        assert meta["config_digest"] == config_digest(cfg)
        assert meta["template_version"] == "default-v1"
        assert meta["normalization"]["unicode_nfc"] is True
        md = (tmp_path / "m")
        write_report(report, md)
        text = (md / "report.md").read_text(encoding="utf-8")
        assert meta["config_digest"] in text


class TestCli:
    def make_logits_dir(self, tmp_path):
        logits_dir = tmp_path / "logits"
        logits_dir.mkdir()
        rng = np.random.default_rng(4)
        for i in range(3):
            raw = rng.normal(0, 2.0, size=(6, 4))
            m = make_logit_matrix(f"dec-{i}", raw, blank_index=0, raw=True)
            save_logits(m, logits_dir / f"dec-{i}.ctcl")
        vocab_file = tmp_path / "vocab.txt"
        vocab_file.write_text("<b>\na\nb\n|\n", encoding="utf-8")
        return logits_dir, vocab_file

    def test_decode_subcommand_is_deterministic(self, tmp_path):
        logits_dir, vocab_file = self.make_logits_dir(tmp_path)
        cfg = {
            "logits_dir": str(logits_dir), "vocab": str(vocab_file),
            "word_delimiter": "|",
            "decode": {"beam_width": 16, "n_best": 3},
            "out_dir": str(tmp_path / "out"),
        }
        cfg_path = write_config(tmp_path, cfg)
        assert main(["--config", str(cfg_path), "decode"]) == 0
        out = tmp_path / "out" / "nbest.jsonl"
        first = out.read_bytes()
        nb = load_nbest(out, n_max=3)
        assert len(nb) == 3
        meta = json.loads((tmp_path / "out" / "nbest.meta.json").read_text())
        assert meta["beam_width"] == 16 and meta["lm_fused"] is False
        assert main(["--config", str(cfg_path), "decode"]) == 0
        assert out.read_bytes() == first

    def test_decode_rejects_bad_beam_config_before_work(self, tmp_path):
        logits_dir, vocab_file = self.make_logits_dir(tmp_path)
        cfg_path = write_config(tmp_path, {
            "logits_dir": str(logits_dir), "vocab": str(vocab_file),
            "decode": {"beam_width": 2, "n_best": 5},
            "out_dir": str(tmp_path / "out"),
        })
        assert main(["--config", str(cfg_path), "decode"]) == 2

    def test_train_lm_round_trip_and_determinism(self, tmp_path):
        model_path = tmp_path / "model.lm"
        cfg_path = write_config(tmp_path, {
            "lm": {"train_corpus": str(FIXTURES / "lm_corpus.txt"),
                   "model": str(model_path)},
            "out_dir": str(tmp_path / "out"),
        })
        assert main(["--config", str(cfg_path), "train-lm"]) == 0
        first = model_path.read_bytes()
        from gerkit.ngram import load_lm, cond_prob
        lm = load_lm(model_path)
        assert cond_prob(lm, "de", ()) > 0
        assert main(["--config", str(cfg_path), "train-lm"]) == 0
        assert model_path.read_bytes() == first

    def test_train_lm_empty_corpus_is_data_error(self, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("", encoding="utf-8")
        cfg_path = write_config(tmp_path, {
            "lm": {"train_corpus": str(empty), "model": str(tmp_path / "m.lm")},
            "out_dir": str(tmp_path / "out"),
        })
        assert main(["--config", str(cfg_path), "train-lm"]) == 2

    def test_correct_writes_records_and_resumes_from_cache(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg_path = write_config(tmp_path, cfg)
        assert main(["--config", str(cfg_path), "correct"]) == 0
        out = tmp_path / "out" / "corrections_generation.jsonl"
        from gerkit.records import load_corrections
        records = load_corrections(out)
        assert len(records) == 20
        assert all(r.parse_status == "ok" for r in records)
        cache_files = list((tmp_path / "cache").glob("*.json"))
        assert len(cache_files) == 20
        # second run consumes the cache and reproduces the same records
        assert main(["--config", str(cfg_path), "correct"]) == 0
        assert load_corrections(out) == records

    def test_correct_with_missing_examples_fails_fast(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["prompt"] = {"mode": "generation", "shots": 3}
        cfg_path = write_config(tmp_path, cfg)
        assert main(["--config", str(cfg_path), "correct"]) == 2

    def test_evaluate_and_report_subcommands(self, tmp_path):
        cfg_path = write_config(tmp_path, base_config(tmp_path))
        assert main(["--config", str(cfg_path), "evaluate"]) == 0
        out = tmp_path / "out"
        assert (out / "report.json").exists()
        assert (out / "report.md").exists()
        # re-render from the JSON into a fresh directory
        render_dir = tmp_path / "rendered"
        assert main(["--out-dir", str(render_dir), "report",
                     "--from-json", str(out / "report.json")]) == 0
        assert (render_dir / "report.md").read_bytes() == \
            (out / "report.md").read_bytes()

    def test_evaluate_consumes_persisted_corrections(self, tmp_path):
        # correct writes the records; a fresh evaluate run reads them from
        # the configured file instead of touching any backend
        cfg = base_config(tmp_path)
        cfg_path = write_config(tmp_path, cfg)
        assert main(["--config", str(cfg_path), "correct"]) == 0
        corr_path = tmp_path / "out" / "corrections_generation.jsonl"

        cfg2 = base_config(tmp_path, corrections={"generation": str(corr_path)})
        cfg2["backend"] = {"kind": "http_chat", "endpoint": "http://nowhere.invalid",
                           "max_retries": 1, "retry_base_delay": 0.0}
        utts = load_manifest(cfg2["manifest"])
        nbests = load_nbest(cfg2["nbest"])
        report = evaluate(config_from_dict(cfg2), utts, nbests)
        assert report["wer"]["llm_generation"] == report["wer"]["baseline"]

    def test_missing_config_is_config_error(self):
        assert main(["evaluate"]) == 2

    def test_missing_manifest_is_data_error(self, tmp_path):
        cfg = base_config(tmp_path, manifest=str(tmp_path / "nope.jsonl"))
        cfg_path = write_config(tmp_path, cfg)
        assert main(["--config", str(cfg_path), "evaluate"]) == 3
