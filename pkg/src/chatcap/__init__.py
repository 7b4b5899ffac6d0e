"""chatcap: enriched video captions from a questioner/answerer dialogue loop."""

from .engine import Transcript, parse_frame_question, run_dialogue, run_frame_centric
from .frames import FrameRef, FrameSet, load_frameset, sample_uniform
from .prompts import DEFAULT_PACK, PromptPack

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PACK",
    "FrameRef",
    "FrameSet",
    "PromptPack",
    "Transcript",
    "load_frameset",
    "parse_frame_question",
    "run_dialogue",
    "run_frame_centric",
    "sample_uniform",
    "__version__",
]
