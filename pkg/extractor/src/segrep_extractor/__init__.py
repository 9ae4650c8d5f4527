"""Export per-layer hidden states from speech encoders into SEGREP1 stores."""

from .extract import ExtractJob, ExtractResult, extract, read_audio_manifest
from .segrep import SegrepDirWriter

__version__ = "0.1.0"

__all__ = [
    "ExtractJob",
    "ExtractResult",
    "extract",
    "read_audio_manifest",
    "SegrepDirWriter",
]
