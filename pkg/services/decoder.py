"""
Thermometer code decoding by ones counting.

The hardware sums the captured bits with a pipelined adder tree. The same
structure is reproduced here: bits are padded to a power of two and pairwise
partial sums are added level by level until one value remains. The result is
the popcount, which is unchanged by a swap of neighbouring bits, so bubbles
around the transition decode to the clean value.
"""

from typing import Optional, Union

import numpy as np

from models import ThermometerCode
from .errors import DecoderError


def adder_tree(bits: np.ndarray) -> np.ndarray:
    """Ones count along the last axis using a log2 reduction of partial sums"""
    partial = np.asarray(bits, dtype=np.int32)
    width = partial.shape[-1]
    padded = 1 << max(0, (width - 1).bit_length())
    if padded != width:
        pad = [(0, 0)] * (partial.ndim - 1) + [(0, padded - width)]
        partial = np.pad(partial, pad)
    while partial.shape[-1] > 1:
        partial = partial[..., 0::2] + partial[..., 1::2]
    return partial[..., 0]


def _bits_of(code: Union[ThermometerCode, str, np.ndarray]) -> np.ndarray:
    if isinstance(code, ThermometerCode):
        return code.bits
    if isinstance(code, str):
        return ThermometerCode.from_string(code).bits
    return np.asarray(code, dtype=np.uint8)


def decode(code: Union[ThermometerCode, str, np.ndarray], n_taps: Optional[int] = None) -> int:
    """Fine value of one code; ``n_taps`` enforces the line length"""
    bits = _bits_of(code)
    if bits.ndim != 1 or bits.size == 0:
        raise DecoderError("a thermometer code is a non-empty bit vector")
    if n_taps is not None and bits.size != n_taps:
        raise DecoderError(f"code length {bits.size} does not match {n_taps} taps")
    return int(adder_tree(bits))


def decode_many(codes: np.ndarray, n_taps: Optional[int] = None) -> np.ndarray:
    """Fine values of a (rows, n_taps) code matrix"""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise DecoderError("expected a two-dimensional code matrix")
    if n_taps is not None and codes.shape[1] != n_taps:
        raise DecoderError(f"code length {codes.shape[1]} does not match {n_taps} taps")
    return adder_tree(codes).astype(np.int64)


def transition_decode(code: Union[ThermometerCode, str, np.ndarray]) -> int:
    """
    Reference decoder that locates the last 1. A 0 right before it marks a
    single bubble, in which case the clean transition sits one tap further.
    """
    bits = _bits_of(code)
    ones = np.flatnonzero(bits)
    if ones.size == 0:
        return 0
    last = int(ones[-1])
    if last > 0 and bits[last - 1] == 0:
        return last
    return last + 1
