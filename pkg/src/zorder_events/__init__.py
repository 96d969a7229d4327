"""Event retrieval over multi-dimensional time series through a Morton-code index."""

from .detect import (
    DETECTORS,
    DetectorDisagreement,
    chain_stages,
    detect,
    detect_bf_improved,
    detect_bf_primitive,
    detect_sfc,
    segments_from_times,
)
from .masks import Event, SearchMask, StageBox, TemporalParams, parse_mask, random_masks, render_mask
from .morton import (
    QuantizationConfig,
    box_to_code_range,
    code_in_box,
    dequantize,
    morton_decode,
    morton_encode,
    quantize,
)
from .store import Store, StoreError, StoreWriter, ingest, ingest_arrays

__all__ = [
    "DETECTORS", "DetectorDisagreement", "Event", "QuantizationConfig", "SearchMask",
    "StageBox", "Store", "StoreError", "StoreWriter", "TemporalParams", "box_to_code_range",
    "chain_stages", "code_in_box", "dequantize", "detect", "detect_bf_improved",
    "detect_bf_primitive", "detect_sfc", "ingest", "ingest_arrays", "morton_decode",
    "morton_encode", "parse_mask", "quantize", "random_masks", "render_mask",
    "segments_from_times",
]
