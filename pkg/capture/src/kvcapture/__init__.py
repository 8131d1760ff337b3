"""Selection-trace capture from instrumented host models."""

__version__ = "0.1.0"

from .capture import (CaptureConfig, UnsupportedModelError, attach_and_capture,
                      run_reference_model, select_top_k)
from .model import ReferenceTinyModel
from .wire import encode_trace, write_trace_file
