"""clipdump: offline exporter from prompt/image manifests to CLAPEMB1
embedding files, via a frozen CLIP checkpoint or a deterministic offline
reference encoder."""

__version__ = "0.1.0"
