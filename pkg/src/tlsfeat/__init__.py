"""TLS stream feature extraction from classic pcap captures."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
from .report import (CaptureAnalysis, Options, PcapSummary, StreamFeatureReport,  # noqa: E402
                     analyze_file, emit_stream_json, run)

__all__ = ["BACKEND", "CaptureAnalysis", "Options", "PcapSummary", "StreamFeatureReport",
           "analyze_file", "emit_stream_json", "run", "__version__"]
