"""A small luma-only intra codec with an HEVC-like coding tree."""

from .bitstream import (Bitstream, BitstreamError, FormatError, MalformedBitstreamError,
                        read_bitstream)
from .encoder import (code_picture, decode_full, decode_leaves, encode, pad_image, partition,
                      reconstruct_block, split_threshold)
from .entropy import CodingUnit, entropy_decode, entropy_encode
from .intra import InvalidModeError, gather_refs, intra_predict, predict_all
from .stages import count_stages
from .transform import (dequantize, forward_transform, inverse_transform, qstep, quantize)

__all__ = [
    "Bitstream", "BitstreamError", "CodingUnit", "FormatError", "InvalidModeError",
    "MalformedBitstreamError", "code_picture", "count_stages", "decode_full", "decode_leaves",
    "dequantize", "encode", "entropy_decode", "entropy_encode", "forward_transform",
    "gather_refs", "intra_predict", "inverse_transform", "pad_image", "partition",
    "predict_all", "qstep", "quantize", "read_bitstream", "reconstruct_block",
    "split_threshold",
]
