import pytest

SAMPLE_TEXT = [
    "The committee approved the budget for the irrigation channel.",
    "Local teams celebrated a famous title win after extra time.",
    "Machine learning systems learn statistical patterns from data.",
    "The festival draws thousands of visitors to the harbour district.",
    "Engineers tested the new bridge under heavy seasonal loads.",
    "A branch of computer science studies natural language.",
    "Markets rallied after the quarterly report beat expectations.",
    "use machine learning and AI techniques to solve problems",
] * 8


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A minimal local seq2seq checkpoint so the service can be exercised
    without downloading weights; random parameters, real architecture."""
    from tokenizers import Tokenizer, models, pre_tokenizers, trainers
    from transformers import BartConfig, BartForConditionalGeneration, PreTrainedTokenizerFast

    out = tmp_path_factory.mktemp("checkpoint")
    tok = Tokenizer(models.BPE(unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.BpeTrainer(
        vocab_size=500,
        special_tokens=["<s>", "<pad>", "</s>", "<unk>", "<mask>"],
    )
    tok.train_from_iterator(SAMPLE_TEXT, trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        bos_token="<s>",
        eos_token="</s>",
        pad_token="<pad>",
        unk_token="<unk>",
        mask_token="<mask>",
    )
    fast.save_pretrained(out)
    config = BartConfig(
        vocab_size=fast.vocab_size,
        d_model=32,
        encoder_layers=1,
        decoder_layers=1,
        encoder_attention_heads=2,
        decoder_attention_heads=2,
        encoder_ffn_dim=64,
        decoder_ffn_dim=64,
        max_position_embeddings=256,
        pad_token_id=fast.pad_token_id,
        bos_token_id=fast.bos_token_id,
        eos_token_id=fast.eos_token_id,
        decoder_start_token_id=fast.eos_token_id,
        forced_eos_token_id=fast.eos_token_id,
    )
    import torch

    torch.manual_seed(0)
    model = BartForConditionalGeneration(config)
    model.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def app(tiny_checkpoint):
    from genius_shim.engines import ShimConfig
    from genius_shim.service import create_app

    config = ShimConfig(
        generator_checkpoint=tiny_checkpoint,
        embedder_checkpoint=tiny_checkpoint,
        max_batch_size=8,
    )
    return create_app(config)


@pytest.fixture(scope="session")
def client(app):
    from fastapi.testclient import TestClient

    with TestClient(app) as tc:
        yield tc
