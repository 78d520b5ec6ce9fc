import json
from pathlib import Path

import pytest

from geniuskit.pipeline import PipelineConfig, build_pretrain_dataset
from geniuskit.sketcher import Template

from conftest import make_corpus


def write_corpus(path: Path, docs, extra_lines=()):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"text": doc}) + "\n")
        for line in extra_lines:
            fh.write(line + "\n")


def shard_bytes(out_dir: Path) -> bytes:
    return b"".join(
        path.read_bytes() for path in sorted(out_dir.glob("pairs-*.jsonl"))
    )


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "docs.jsonl"
    write_corpus(path, make_corpus(300, seed=21))
    return path


class TestBuildDataset:
    def test_manifest_accounting(self, corpus_path, tmp_path):
        config = PipelineConfig(workers=1, shard_size=64)
        manifest = build_pretrain_dataset(corpus_path, tmp_path / "out", config)
        assert manifest.read == 300
        assert manifest.read == manifest.emitted + sum(manifest.skipped.values())
        assert manifest.emitted > 0
        manifest.check()

    def test_output_is_valid_pair_jsonl(self, corpus_path, tmp_path):
        config = PipelineConfig(workers=1, shard_size=50)
        manifest = build_pretrain_dataset(corpus_path, tmp_path / "out", config)
        seen = 0
        for shard in manifest.shards:
            with open(tmp_path / "out" / shard, encoding="utf-8") as fh:
                for line in fh:
                    obj = json.loads(line)
                    assert set(obj) == {"sketch", "text"}
                    assert obj["sketch"] and obj["text"]
                    seen += 1
        assert seen == manifest.emitted
        assert len(manifest.shards) == -(-manifest.emitted // 50)

    def test_length_bounds_skip(self, tmp_path):
        docs = make_corpus(5, seed=22, min_words=10, max_words=20)  # all too short
        path = tmp_path / "short.jsonl"
        write_corpus(path, docs)
        manifest = build_pretrain_dataset(path, tmp_path / "out", PipelineConfig())
        assert manifest.emitted == 0
        assert manifest.skipped == {"length": 5}

    def test_parse_errors_skipped_not_fatal(self, tmp_path):
        docs = make_corpus(3, seed=23)
        path = tmp_path / "mixed.jsonl"
        write_corpus(path, docs, extra_lines=["{not json", '{"other": 1}', '{"text": 5}'])
        manifest = build_pretrain_dataset(path, tmp_path / "out", PipelineConfig())
        assert manifest.read == 6
        assert manifest.skipped.get("parse") == 3

    def test_deterministic_across_worker_counts(self, corpus_path, tmp_path):
        config1 = PipelineConfig(workers=1, shard_size=64)
        config2 = PipelineConfig(workers=4, shard_size=64)
        m1 = build_pretrain_dataset(corpus_path, tmp_path / "w1", config1)
        m2 = build_pretrain_dataset(corpus_path, tmp_path / "w4", config2)
        assert shard_bytes(tmp_path / "w1") == shard_bytes(tmp_path / "w4")
        assert m1.emitted == m2.emitted
        assert m1.config_hash != m2.config_hash  # worker count is part of config

    def test_random_template_deterministic_given_seed(self, corpus_path, tmp_path):
        config = PipelineConfig(workers=2, template=Template.T4_RANDOM, seed=5)
        build_pretrain_dataset(corpus_path, tmp_path / "a", config)
        build_pretrain_dataset(corpus_path, tmp_path / "b", config)
        assert shard_bytes(tmp_path / "a") == shard_bytes(tmp_path / "b")
        other = PipelineConfig(workers=2, template=Template.T4_RANDOM, seed=6)
        build_pretrain_dataset(corpus_path, tmp_path / "c", other)
        assert shard_bytes(tmp_path / "a") != shard_bytes(tmp_path / "c")

    def test_refuses_to_clobber_without_overwrite(self, corpus_path, tmp_path):
        out = tmp_path / "out"
        build_pretrain_dataset(corpus_path, out, PipelineConfig())
        with pytest.raises(FileExistsError):
            build_pretrain_dataset(corpus_path, out, PipelineConfig())
        manifest = build_pretrain_dataset(corpus_path, out, PipelineConfig(), overwrite=True)
        assert manifest.emitted > 0

    def test_no_tmp_files_after_success(self, corpus_path, tmp_path):
        build_pretrain_dataset(corpus_path, tmp_path / "out", PipelineConfig())
        assert list((tmp_path / "out").glob("*.tmp")) == []

    def test_masking_stats_recorded(self, corpus_path, tmp_path):
        manifest = build_pretrain_dataset(corpus_path, tmp_path / "out", PipelineConfig())
        assert manifest.masking_ratio_mean is not None
        assert 0.0 < manifest.masking_ratio_mean < 1.0
        assert manifest.masking_ratio_std is not None

    def test_max_sentences_filter(self, tmp_path):
        docs = make_corpus(10, seed=25)
        path = tmp_path / "docs.jsonl"
        write_corpus(path, docs)
        config = PipelineConfig(max_sentences=2)
        manifest = build_pretrain_dataset(path, tmp_path / "out", config)
        assert manifest.skipped.get("sentences", 0) > 0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PipelineConfig(min_words=10, max_words=5)
        with pytest.raises(ValueError):
            PipelineConfig(workers=0)

    def test_aborted_run_leaves_only_marked_temporaries(self, corpus_path, tmp_path, monkeypatch):
        import geniuskit.pipeline as pipeline_mod

        original = pipeline_mod._ShardWriter.write
        state = {"writes": 0}

        def exploding_write(self, line):
            state["writes"] += 1
            if state["writes"] > 10:
                raise OSError("disk full")
            return original(self, line)

        monkeypatch.setattr(pipeline_mod._ShardWriter, "write", exploding_write)
        out = tmp_path / "out"
        with pytest.raises(OSError):
            build_pretrain_dataset(corpus_path, out, PipelineConfig(shard_size=1000))
        # incomplete shard cleaned up, no manifest claiming success
        assert list(out.glob("pairs-*.jsonl")) == []
        assert list(out.glob("*.tmp")) == []
        assert not (out / "manifest.json").exists()
