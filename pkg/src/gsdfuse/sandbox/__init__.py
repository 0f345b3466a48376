"""Synthetic steganography sandbox: toy LM, HC/AC/ADG codecs, forest synthesis."""

from .adg import adg_decode, adg_encode, partition
from .arithmetic import ac_decode, ac_encode
from .bits import BitStream, EncodeResult
from .huffman import canonical_codes, hc_decode, hc_encode
from .kl import kl_diagnostic
from .lm import TokenModel, sample_cover
from .synth import CODECS, SandboxSpec, decode, encode, grow_trees, substitute, synthesize_sandbox

__all__ = [
    "BitStream", "CODECS", "EncodeResult", "SandboxSpec", "TokenModel",
    "ac_decode", "ac_encode", "adg_decode", "adg_encode", "canonical_codes", "decode",
    "encode", "grow_trees", "hc_decode", "hc_encode", "kl_diagnostic", "partition",
    "sample_cover", "substitute", "synthesize_sandbox",
]
