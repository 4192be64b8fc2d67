"""Query-candidate scoring with pre-computed candidate context embeddings.

Sub-modules:

* ``numcore``: numpy tensors with reverse-mode autodiff, layers, Adam, FLOP counting
* ``encoder``: vocabulary, token sequences, transformer encoder
* ``precompute``: offline candidate encoding and the binary candidate cache
* ``interaction``: interaction layers and layer schedules
* ``heads`` / ``models`` / ``baselines``: scoring heads, the mix model and comparison models
* ``corpus`` / ``metrics`` / ``training`` / ``cost`` / ``bench`` / ``cli``: experiment tooling
"""

from .models import ModelConfig, MixEncoder, build_model

__all__ = ["ModelConfig", "MixEncoder", "build_model"]
__version__ = "0.1.0"
