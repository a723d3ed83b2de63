"""Model loading and batched hidden-state inference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import torch

from .errors import ExtractionError


@dataclass
class ModelRunner:
    tokenizer: Any
    model: Any
    device: str
    n_layers: int
    hidden_size: int
    max_positions: int

    @classmethod
    def load(cls, model_id: str, device: str = "cpu") -> "ModelRunner":
        from transformers import AutoModelForCausalLM, AutoTokenizer
        from transformers.utils import logging as hf_logging

        hf_logging.disable_progress_bar()
        try:
            tokenizer = AutoTokenizer.from_pretrained(model_id)
            model = AutoModelForCausalLM.from_pretrained(model_id)
        except (OSError, ValueError) as e:
            raise ExtractionError(f"cannot load model {model_id!r}: {e}") from e
        if tokenizer.pad_token is None:
            if tokenizer.eos_token is None:
                raise ExtractionError(
                    f"tokenizer for {model_id!r} has neither pad nor eos token; "
                    "cannot pad batches"
                )
            tokenizer.pad_token = tokenizer.eos_token
        # right padding keeps real tokens at positions 0..len-1, so pooled
        # states do not depend on how much padding a batch added
        tokenizer.padding_side = "right"
        model.to(device)
        model.eval()
        cfg = model.config
        return cls(
            tokenizer=tokenizer,
            model=model,
            device=device,
            n_layers=int(cfg.num_hidden_layers),
            hidden_size=int(cfg.hidden_size),
            max_positions=int(getattr(cfg, "max_position_embeddings", 1 << 30)),
        )

    def token_count(self, text: str) -> int:
        return len(self.tokenizer(text)["input_ids"])

    def layer_states(self, prompts: list[str], layer_ids: tuple[int, ...]) -> list[np.ndarray]:
        """Run one batch; per prompt return [l_kept, n_tokens, dim] float32.

        layer_ids index the model's hidden-state stack, where 0 is the
        embedding layer and n_layers is the final block's output.
        """
        enc = self.tokenizer(prompts, return_tensors="pt", padding=True)
        input_ids = enc["input_ids"].to(self.device)
        attention_mask = enc["attention_mask"].to(self.device)
        try:
            with torch.no_grad():
                out = self.model(
                    input_ids=input_ids,
                    attention_mask=attention_mask,
                    output_hidden_states=True,
                    use_cache=False,
                )
        except torch.cuda.OutOfMemoryError as e:
            raise ExtractionError(
                f"out of memory on a batch of {len(prompts)} sequences "
                f"(longest {int(attention_mask.sum(dim=1).max())} tokens); "
                "rerun with a smaller --batch-size or --max-tokens"
            ) from e
        hidden = out.hidden_states
        results: list[np.ndarray] = []
        lengths = attention_mask.sum(dim=1).tolist()
        for i, n_tokens in enumerate(lengths):
            layers = [
                hidden[layer][i, :n_tokens].to(torch.float32).cpu().numpy()
                for layer in layer_ids
            ]
            results.append(np.stack(layers))
        return results
