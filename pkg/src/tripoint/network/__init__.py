from .config import ModelConfig
from .model import Completion, CompletionNet, complete

__all__ = ["Completion", "CompletionNet", "ModelConfig", "complete"]
