"""demoret: demonstration retrieval for in-context learning.

Trains per-layer projection heads over pooled LLM hidden states with a
softmax-weighted combination across layers, supervised by a proxy benefit
score, and serves exact top-k retrieval over the learned embeddings.
"""

__version__ = "0.1.0"
