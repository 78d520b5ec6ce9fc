import random

import pytest

from geniuskit.augmenters import (
    AugmentOptions,
    ClassificationRecord,
    Gazetteer,
    MrcExample,
    NerSequence,
    augment_classification,
    augment_mrc,
    augment_ner,
    build_finetune_pairs,
    concat_sequences,
    entity_spans,
    passage_tri,
    relabel,
    strip_prompt,
    validate_bio,
)
from geniuskit.backends import EchoStub, GenerationResponse, HashEmbedder, TransportError
from geniuskit.metrics import sketch_lost

from conftest import CONLL_FIXTURE


EMBEDDER = HashEmbedder(dim=64)


def echo_options(**kwargs):
    kwargs.setdefault("workers", 1)
    return AugmentOptions(**kwargs)


class FailingGenerator:
    """Fails every call; used to exercise failure accounting."""

    backend_id = "failing"

    def generate(self, request):
        raise TransportError("down", attempts=3)


class LossyGenerator:
    """Returns text unrelated to the sketch (drops all fragments)."""

    backend_id = "lossy"

    def generate(self, request):
        return GenerationResponse(texts=("zz qq",) * request.n, backend_id=self.backend_id)


class TestStripPrompt:
    def test_plain(self):
        assert strip_prompt("Sports: great game", "Sports", ":") == "great game"

    def test_no_echo_unchanged(self):
        assert strip_prompt("great game", "Sports", ":") == "great game"

    def test_whitespace_tolerant(self):
        assert strip_prompt("Sports :  great", "Sports", ":") == "great"

    def test_eos_separator(self):
        assert strip_prompt("Sports</s> fine", "Sports", "</s>") == "fine"

    def test_case_sensitive(self):
        assert strip_prompt("sports: kept", "Sports", ":") == "sports: kept"


class TestBioValidation:
    def test_accepts_fixture(self):
        for tokens, tags in CONLL_FIXTURE:
            validate_bio(tags)

    def test_rejects_dangling_inside(self):
        with pytest.raises(ValueError):
            validate_bio(["O", "I-ORG"])

    def test_rejects_type_switch(self):
        with pytest.raises(ValueError):
            validate_bio(["B-ORG", "I-PER"])

    def test_x_is_non_entity(self):
        validate_bio(["X", "B-LOC", "I-LOC", "X"])
        with pytest.raises(ValueError):
            validate_bio(["X", "I-LOC"])

    def test_sequence_length_mismatch(self):
        with pytest.raises(ValueError):
            NerSequence(tokens=("a",), tags=("O", "O"), id="x")


class TestGazetteer:
    def test_entities_extracted(self, conll_sequences):
        gaz = Gazetteer.from_sequences(conll_sequences)
        assert gaz.entries[("EU",)] == "ORG"
        assert gaz.entries[("German",)] == "MISC"
        assert gaz.entries[("Werner", "Zwingmann")] == "PER"
        assert gaz.entries[("European", "Union")] == "ORG"

    def test_conflict_keeps_most_frequent(self):
        seqs = [
            NerSequence(tokens=("Paris",), tags=("B-LOC",), id="a"),
            NerSequence(tokens=("Paris",), tags=("B-PER",), id="b"),
            NerSequence(tokens=("Paris",), tags=("B-LOC",), id="c"),
        ]
        assert Gazetteer.from_sequences(seqs).entries[("Paris",)] == "LOC"

    def test_entity_spans_trailing(self):
        spans = entity_spans(["a", "b"], ["B-ORG", "I-ORG"])
        assert spans == [(("a", "b"), "ORG")]


class TestRelabel:
    def test_single_token_entity(self):
        gaz = Gazetteer({("EU",): "ORG"})
        assert relabel(["EU"], gaz) == ["B-ORG"]

    def test_multi_token_entity(self):
        gaz = Gazetteer({("Werner", "Zwingmann"): "PER"})
        assert relabel(["Werner", "Zwingmann"], gaz) == ["B-PER", "I-PER"]

    def test_longest_match_wins(self):
        gaz = Gazetteer({("New", "York"): "LOC", ("New", "York", "City"): "LOC"})
        tags = relabel(["New", "York", "City"], gaz)
        assert tags == ["B-LOC", "I-LOC", "I-LOC"]

    def test_appendix_generated_sentence(self, conll_sequences):
        gaz = Gazetteer.from_sequences(conll_sequences)
        tokens = ("The German government says the idea is unacceptable "
                  "and that the EU should reject it .").split()
        tags = relabel(tokens, gaz)
        assert tags[tokens.index("German")] == "B-MISC"
        assert tags[tokens.index("EU")] == "B-ORG"
        others = [t for tok, t in zip(tokens, tags) if tok not in ("German", "EU")]
        assert set(others) == {"O"}

    def test_unseen_entity_default_vs_conservative(self, conll_sequences):
        gaz = Gazetteer.from_sequences(conll_sequences)
        tokens = ["meat", "exported", "to", "India", "."]
        assert relabel(tokens, gaz, "default") == ["O"] * 5
        assert relabel(tokens, gaz, "conservative") == ["X"] * 5

    def test_case_sensitive(self):
        gaz = Gazetteer({("EU",): "ORG"})
        assert relabel(["eu"], gaz) == ["O"]

    def test_mode_validated(self):
        with pytest.raises(ValueError):
            relabel(["a"], Gazetteer({}), "loose")

    def test_randomized_outputs_always_bio_wellformed(self):
        rng = random.Random(99)
        vocab = [f"tok{i}" for i in range(30)]
        for _ in range(300):
            entries = {}
            for _ in range(rng.randint(1, 8)):
                surface = tuple(rng.sample(vocab, k=rng.randint(1, 3)))
                entries[surface] = rng.choice(["PER", "ORG", "LOC", "MISC"])
            gaz = Gazetteer(entries)
            tokens = rng.choices(vocab, k=rng.randint(0, 25))
            mode = rng.choice(["default", "conservative"])
            tags = relabel(tokens, gaz, mode)
            assert len(tags) == len(tokens)
            validate_bio(tags)


class TestConcat:
    def test_three_thirty_word_sequences(self):
        seqs = [
            NerSequence(tokens=tuple(f"w{i}_{j}" for j in range(30)),
                        tags=("O",) * 30, id=f"s{i}")
            for i in range(3)
        ]
        passages = concat_sequences(seqs, max_words=100)
        assert len(passages) == 1
        assert len(passages[0].tokens) == 90
        assert passages[0].source_ids == ("s0", "s1", "s2")

    def test_sixty_sixty_splits(self):
        seqs = [
            NerSequence(tokens=tuple(f"w{i}_{j}" for j in range(60)),
                        tags=("O",) * 60, id=f"s{i}")
            for i in range(2)
        ]
        assert len(concat_sequences(seqs, max_words=100)) == 2

    def test_oversize_sequence_passes_alone(self):
        big = NerSequence(tokens=tuple(f"b{j}" for j in range(140)), tags=("O",) * 140, id="big")
        small = NerSequence(tokens=("a", "b"), tags=("O", "O"), id="small")
        passages = concat_sequences([small, big, small], max_words=100)
        assert [p.source_ids for p in passages] == [("small",), ("big",), ("small",)]

    def test_token_sources_trace_back(self, conll_sequences):
        passages = concat_sequences(conll_sequences, max_words=100)
        for passage in passages:
            assert len(passage.token_sources) == len(passage.tokens)
            for token, (seq_id, idx) in zip(passage.tokens, passage.token_sources):
                source = next(s for s in conll_sequences if s.id == seq_id)
                assert source.tokens[idx] == token

    def test_fifty_sequence_fixture_frozen_count(self):
        rng = random.Random(23)
        seqs = []
        for i in range(50):
            n = rng.randint(8, 30)
            seqs.append(
                NerSequence(tokens=tuple(f"t{i}_{j}" for j in range(n)),
                            tags=("O",) * n, id=f"s{i:03d}")
            )
        passages = concat_sequences(seqs, max_words=100)
        assert len(passages) == 11  # frozen
        assert sum(len(p.tokens) for p in passages) == sum(len(s.tokens) for s in seqs)


class TestAugmentClassification:
    def test_multiplier_counts_and_labels(self, clf_records):
        outputs, report = augment_classification(
            clf_records, EchoStub(), EMBEDDER, echo_options(multiplier=3)
        )
        assert len(outputs) == 150
        assert report.attempted == 150 and report.emitted == 150
        assert report.discarded == 0 and report.failed == 0
        by_id = {rec.id: rec for rec in clf_records}
        for out in outputs:
            assert out.provenance and out.provenance[0] in by_id
            assert out.label == by_id[out.provenance[0]].label

    def test_prompt_stripped_and_sketch_kept(self, clf_records):
        from geniuskit.augmenters import classification_sketch

        options = echo_options(multiplier=1)
        outputs, _ = augment_classification(clf_records[:8], EchoStub(), EMBEDDER, options)
        for src, out in zip(clf_records[:8], outputs):
            assert not out.text.startswith(f"{src.label}:")
            sketch = classification_sketch(src, EMBEDDER, options)
            assert sketch_lost(sketch, out.text) == 0.0

    def test_no_attribute_control_sends_no_prompt(self, clf_records):
        outputs, _ = augment_classification(
            clf_records[:2], EchoStub(), EMBEDDER,
            echo_options(attribute_control=False),
        )
        for out in outputs:
            assert "filler" in out.text

    def test_output_order_follows_input(self, clf_records):
        outputs, _ = augment_classification(
            clf_records[:10], EchoStub(), EMBEDDER,
            echo_options(multiplier=2, workers=4),
        )
        sources = [out.provenance[0] for out in outputs]
        assert sources == sorted(sources, key=lambda s: [r.id for r in clf_records].index(s))

    def test_failures_counted_not_fatal(self, clf_records):
        outputs, report = augment_classification(
            clf_records[:5], FailingGenerator(), EMBEDDER, echo_options(multiplier=2)
        )
        assert outputs == []
        assert report.attempted == 10 and report.failed == 10
        assert report.emitted == 0

    def test_mixup_provenance_has_k_sources(self, clf_records):
        outputs, report = augment_classification(
            clf_records, EchoStub(), EMBEDDER, echo_options(mixup_k=2)
        )
        assert len(outputs) == 50
        for out in outputs:
            assert len(out.provenance) == 2
            labels = {next(r for r in clf_records if r.id == pid).label for pid in out.provenance}
            assert labels == {out.label}

    def test_deterministic_across_runs(self, clf_records):
        a, _ = augment_classification(clf_records[:10], EchoStub(), EMBEDDER, echo_options())
        b, _ = augment_classification(clf_records[:10], EchoStub(), EMBEDDER, echo_options())
        assert a == b

    def test_label_required(self):
        with pytest.raises(ValueError):
            ClassificationRecord(text="x", label="", id="r")


class TestAugmentNer:
    def test_echo_passthrough_recovers_tags(self, conll_sequences):
        gaz = Gazetteer.from_sequences(conll_sequences)
        for seq in conll_sequences:
            assert list(relabel(seq.tokens, gaz)) == list(seq.tags)

    def test_pipeline_echo(self, conll_sequences):
        gaz = Gazetteer.from_sequences(conll_sequences)
        passages = concat_sequences(conll_sequences, max_words=100)
        outputs, report = augment_ner(
            passages, gaz, EchoStub(), EMBEDDER, echo_options(multiplier=2)
        )
        assert report.attempted == 2 * len(passages)
        assert report.emitted == len(outputs)
        assert report.emitted + report.discarded == report.attempted
        for seq in outputs:
            validate_bio(seq.tags)
            assert any(tag.startswith("B-") for tag in seq.tags)

    def test_zero_match_generations_dropped(self, conll_sequences):
        gaz = Gazetteer.from_sequences(conll_sequences)
        passages = concat_sequences(conll_sequences, max_words=100)
        outputs, report = augment_ner(
            passages, gaz, LossyGenerator(), EMBEDDER, echo_options()
        )
        assert outputs == []
        assert report.discarded == report.attempted

    def test_passage_tri_joins_entities(self, conll_sequences):
        passages = concat_sequences(conll_sequences[:1], max_words=100)
        tri = passage_tri(passages[0])
        assert "EU" in tri and "German" in tri and "British" in tri

    def test_conservative_mode_emits_x(self, conll_sequences):
        gaz = Gazetteer.from_sequences(conll_sequences)
        passages = concat_sequences(conll_sequences, max_words=100)
        outputs, _ = augment_ner(
            passages, gaz, EchoStub(), EMBEDDER, echo_options(relabel_mode="conservative")
        )
        assert outputs
        for seq in outputs:
            assert "O" not in seq.tags
            assert "X" in seq.tags


MRC_PARAGRAPH = (
    "The old library sits on the hill above town. It was built in 1891 by "
    "the Harland family. Many tourists visit the reading room each summer. "
    "The gardens behind it host a book fair every June."
)


def mrc_example():
    answer = "1891"
    return MrcExample(
        paragraph=MRC_PARAGRAPH,
        question="When was the library built?",
        answer=answer,
        answer_start=MRC_PARAGRAPH.index(answer),
    )


class TestAugmentMrc:
    def test_offset_invariant_enforced(self):
        with pytest.raises(ValueError):
            MrcExample(paragraph="abc", question="q", answer="zz", answer_start=0)

    def test_echo_emits_all(self):
        outputs, report = augment_mrc(
            [mrc_example()], EchoStub(), EMBEDDER, echo_options(multiplier=3)
        )
        assert report.attempted == 3 and report.emitted == 3 and report.discarded == 0
        for out in outputs:
            end = out.answer_start + len(out.answer)
            assert out.paragraph[out.answer_start : end] == out.answer
            assert out.question == "When was the library built?"

    def test_answer_sentence_kept_verbatim(self):
        example = mrc_example()
        outputs, _ = augment_mrc([example], EchoStub(), EMBEDDER, echo_options())
        assert "It was built in 1891 by the Harland family." in outputs[0].paragraph

    def test_lost_answer_discarded_and_counted(self):
        outputs, report = augment_mrc(
            [mrc_example()], LossyGenerator(), EMBEDDER, echo_options(multiplier=4)
        )
        assert outputs == []
        assert report.discarded == 4
        assert report.emitted + report.discarded == report.attempted

    def test_failures_counted(self):
        _, report = augment_mrc(
            [mrc_example()], FailingGenerator(), EMBEDDER, echo_options(multiplier=2)
        )
        assert report.failed == 2
        assert report.emitted + report.discarded + report.failed == report.attempted

    def test_answer_at_paragraph_start(self):
        paragraph = "Marie Curie discovered polonium. She won two Nobel prizes later."
        example = MrcExample(
            paragraph=paragraph, question="Who discovered polonium?",
            answer="Marie Curie", answer_start=0,
        )
        outputs, report = augment_mrc([example], EchoStub(), EMBEDDER, echo_options())
        assert report.emitted == 1
        out = outputs[0]
        assert out.paragraph[out.answer_start : out.answer_start + len(out.answer)] == out.answer


class TestFinetunePairs:
    def test_one_pair_per_record(self, clf_records):
        pairs = build_finetune_pairs(clf_records, EMBEDDER, echo_options())
        assert len(pairs) == 50

    def test_fragments_occur_in_text(self, clf_records):
        options = echo_options()
        for pair in build_finetune_pairs(clf_records[:10], EMBEDDER, options):
            body = pair.sketch.split(" ", 1)[1]  # drop "Label:" prefix
            for frag in body.split(options.mask_token):
                frag = frag.strip()
                if frag:
                    assert frag in pair.text

    def test_frozen_first_pair(self, clf_records):
        pairs = build_finetune_pairs(clf_records[:1], EMBEDDER, echo_options())
        assert pairs[0].sketch == (
            "Sports: <mask> plan that match <mask> local players week stadium <mask>"
        )
        assert pairs[0].text == clf_records[0].text

    def test_no_prompt_without_attribute_control(self, clf_records):
        pairs = build_finetune_pairs(
            clf_records[:3], EMBEDDER, echo_options(attribute_control=False)
        )
        for pair, rec in zip(pairs, clf_records):
            assert not pair.sketch.startswith(f"{rec.label}:")
