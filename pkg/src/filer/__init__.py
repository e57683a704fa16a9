"""Multimodal image matching from frequency-domain local energy.

Typical use::

    from filer import match_images, load_grayscale
    ms, h, diag = match_images(load_grayscale("a.png"), load_grayscale("b.png"))
"""
from .errors import FilerError
from .imagecore import load_grayscale, save_grayscale
from .matcher import PipelineConfig, estimate_global_rotation, extract_features, match_images
from .synthgen import SynthSpec, generate_pair
from .evalbench import EvalReport, GroundTruth, evaluate_matches

__all__ = [
    "FilerError", "load_grayscale", "save_grayscale", "PipelineConfig", "estimate_global_rotation",
    "extract_features", "match_images", "SynthSpec", "generate_pair", "EvalReport", "GroundTruth",
    "evaluate_matches",
]
__version__ = "0.1.0"
