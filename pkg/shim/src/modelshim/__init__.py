"""HTTP model shim for the tagrank engine.

Serves ``/embed`` (bi-encoder with role prompts) and ``/score``
(cross-encoder pair classifier) over the wire protocols the engine's
remote embedder and scorer speak, and trains the pair classifier from
the engine's labeled pair files.
"""

from .config import ShimConfig
from .server import create_app, serve
from .train import TrainConfig, train_cross_encoder

__version__ = "0.1.0"
