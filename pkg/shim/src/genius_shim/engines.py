"""Model engines: a seq2seq fill-in generator and a mean-pooled embedder.

Checkpoints are anything `transformers` can load (hub id or local path).
The embedder reuses the encoder of a seq2seq checkpoint when given one, so
a single checkpoint can back both endpoints in small deployments.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from transformers import AutoModel, AutoModelForSeq2SeqLM, AutoTokenizer


@dataclass(frozen=True)
class ShimConfig:
    generator_checkpoint: str
    embedder_checkpoint: str
    device: str = "cpu"
    max_batch_size: int = 32
    port: int = 8080


class GeneratorEngine:
    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(checkpoint).to(device).eval()
        self.device = device
        self.max_input_tokens = min(
            getattr(self.model.config, "max_position_embeddings", 1024) - 2, 1022
        )

    def generate(
        self,
        sketch: str,
        prompt: str | None,
        n: int,
        max_new_tokens: int,
        num_beams: int,
        do_sample: bool,
        top_k: int | None,
        top_p: float | None,
        seed: int | None,
    ) -> list[str]:
        # prompt concatenation lives here: the client sends them separately
        text = f"{prompt} {sketch}" if prompt else sketch
        if seed is not None:
            torch.manual_seed(seed)
        inputs = self.tokenizer(
            text,
            return_tensors="pt",
            truncation=True,
            max_length=self.max_input_tokens,
        ).to(self.device)
        kwargs = {
            "max_new_tokens": max_new_tokens,
            "num_beams": max(num_beams, n),
            "do_sample": do_sample,
            "num_return_sequences": n,
        }
        if do_sample and top_k is not None:
            kwargs["top_k"] = top_k
        if do_sample and top_p is not None:
            kwargs["top_p"] = top_p
        with torch.no_grad():
            output = self.model.generate(**inputs, **kwargs)
        return [
            self.tokenizer.decode(seq, skip_special_tokens=True) for seq in output
        ]


class EmbedderEngine:
    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        model = AutoModel.from_pretrained(checkpoint).to(device).eval()
        self.encoder = model.get_encoder() if hasattr(model, "get_encoder") else model
        self.device = device
        self.dim = model.config.hidden_size if hasattr(model.config, "hidden_size") else (
            model.config.d_model
        )

    def embed(self, texts: list[str]) -> list[list[float]]:
        batch = self.tokenizer(
            texts, return_tensors="pt", padding=True, truncation=True, max_length=512
        ).to(self.device)
        with torch.no_grad():
            hidden = self.encoder(
                input_ids=batch["input_ids"], attention_mask=batch["attention_mask"]
            ).last_hidden_state
        mask = batch["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        normalized = torch.nn.functional.normalize(pooled, dim=-1)
        return normalized.cpu().tolist()
