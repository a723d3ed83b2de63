"""Build a tiny local causal LM for tests and demos.

The model is a randomly initialized (seeded) Llama-architecture network
small enough to run anywhere: hidden size 64, six layers. The tokenizer is
word-level over a fixed vocabulary of schema/question-ish words, digits and
punctuation, with no automatic special tokens, so a one-word prompt really
is a single token. Everything is written with save_pretrained, so the
output directory works as a model identifier.
"""

from __future__ import annotations

SPECIALS = ("[PAD]", "[UNK]", "[BOS]", "[EOS]")

WORDS = (
    "create", "table", "users", "orders", "items", "products", "people",
    "id", "name", "email", "city", "price", "total", "amount", "date",
    "year", "age", "int", "text", "real",
    "select", "from", "where", "group", "by", "order", "limit", "join",
    "on", "count", "sum", "avg", "max", "min", "distinct", "as",
    "and", "or", "not", "null", "desc", "asc",
    "how", "many", "what", "which", "who", "list", "show", "find", "give",
    "all", "the", "of", "in", "with", "than", "more", "less", "each",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "(", ")", ",", ";", ".", "*", "=", ">", "<", "?", "'",
)


def build_tiny_model(
    out_dir: str,
    seed: int = 0,
    hidden_size: int = 64,
    n_layers: int = 6,
) -> str:
    """Create and save the model plus tokenizer; returns out_dir."""
    import torch
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from transformers import LlamaConfig, LlamaForCausalLM, PreTrainedTokenizerFast
    from transformers.utils import logging as hf_logging

    hf_logging.disable_progress_bar()
    vocab = {tok: i for i, tok in enumerate(SPECIALS + WORDS)}
    backend = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    backend.pre_tokenizer = Whitespace()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend,
        pad_token="[PAD]",
        unk_token="[UNK]",
        bos_token="[BOS]",
        eos_token="[EOS]",
        model_max_length=512,
    )

    config = LlamaConfig(
        vocab_size=len(vocab),
        hidden_size=hidden_size,
        intermediate_size=2 * hidden_size,
        num_hidden_layers=n_layers,
        num_attention_heads=4,
        num_key_value_heads=4,
        max_position_embeddings=512,
        pad_token_id=vocab["[PAD]"],
        bos_token_id=vocab["[BOS]"],
        eos_token_id=vocab["[EOS]"],
    )
    torch.manual_seed(seed)
    model = LlamaForCausalLM(config)
    model.eval()
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    return out_dir
