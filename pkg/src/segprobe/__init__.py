"""segprobe: segmental accent analysis over speech representations."""

__version__ = "0.1.0"
