"""Model parameters and their canonical wire format.

A WeightVector is the unit of exchange between clusters: a flat float64
array plus a per-layer (rows, cols) shape descriptor. The byte layout is
fixed so equal weights always hash to the same content id:

    bytes 0..3    magic "UFW1"
    bytes 4..7    layer count, uint32 little-endian
    then per layer: rows uint32 LE, cols uint32 LE
    then all values as IEEE-754 float64 little-endian, layer by layer,
    row-major within a layer
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"UFW1"

_U32 = struct.Struct("<I")


class FormatError(ValueError):
    """Base class for wire-format parse failures."""


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class DimMismatchError(FormatError):
    pass


class NonFiniteError(ValueError):
    """Weights contain NaN or Inf and cannot be serialized."""


class ShapeMismatchError(ValueError):
    """Operands do not share a layer shape."""


class WeightVector:
    """Immutable flat parameter vector with a layer-shape descriptor."""

    __slots__ = ("values", "shape")

    def __init__(self, values, shape):
        arr = np.asarray(values, dtype=np.float64).reshape(-1).copy()
        shape = [(int(r), int(c)) for r, c in shape]
        total = sum(r * c for r, c in shape)
        if arr.size != total:
            raise ValueError(
                f"shape {shape} implies {total} values, got {arr.size}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "shape", shape)

    def __setattr__(self, name, value):
        raise AttributeError("WeightVector is immutable")

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self.values, other.values)

    def __repr__(self):
        return f"WeightVector(shape={self.shape}, n={self.values.size})"

    @classmethod
    def from_layers(cls, layers):
        """Build from a list of 2-D arrays."""
        mats = [np.asarray(m, dtype=np.float64) for m in layers]
        values = np.concatenate([m.reshape(-1) for m in mats]) if mats else []
        return cls(values, [m.shape for m in mats])

    @classmethod
    def zeros(cls, shape):
        total = sum(r * c for r, c in shape)
        return cls(np.zeros(total), shape)

    def layers(self):
        """Views of the flat values as row-major 2-D matrices."""
        out = []
        offset = 0
        for r, c in self.shape:
            out.append(self.values[offset:offset + r * c].reshape(r, c))
            offset += r * c
        return out


def serialize(w: WeightVector) -> bytes:
    """Encode to the canonical byte layout; rejects non-finite values."""
    if not np.isfinite(w.values).all():
        raise NonFiniteError("weight vector contains NaN or Inf")
    parts = [MAGIC, _U32.pack(len(w.shape))]
    for r, c in w.shape:
        parts.append(_U32.pack(r))
        parts.append(_U32.pack(c))
    parts.append(w.values.astype("<f8").tobytes())
    return b"".join(parts)


def deserialize(b: bytes) -> WeightVector:
    """Decode canonical bytes; inverse of serialize, bit for bit."""
    if len(b) < 4 or b[:4] != MAGIC:
        raise BadMagicError("not a weight blob (bad magic)")
    if len(b) < 8:
        raise TruncatedError("header cut short before layer count")
    (n_layers,) = _U32.unpack_from(b, 4)
    header_end = 8 + 8 * n_layers
    if len(b) < header_end:
        raise TruncatedError("header cut short inside layer dims")
    shape = []
    for i in range(n_layers):
        (r,) = _U32.unpack_from(b, 8 + 8 * i)
        (c,) = _U32.unpack_from(b, 12 + 8 * i)
        shape.append((r, c))
    total = sum(r * c for r, c in shape)
    payload = b[header_end:]
    if len(payload) < 8 * total:
        raise TruncatedError(
            f"payload holds {len(payload) // 8} values, header declares {total}")
    if len(payload) > 8 * total:
        raise DimMismatchError(
            f"payload holds {len(payload) // 8} values, header declares {total}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return WeightVector(values, shape)


def linear_combine(terms) -> WeightVector:
    """Elementwise sum of coefficient * weights, left to right.

    The summation order is fixed by the term list so results are
    run-to-run deterministic.
    """
    terms = list(terms)
    if not terms:
        raise ValueError("linear_combine needs at least one term")
    first, coeff = terms[0]
    shape = first.shape
    acc = coeff * first.values
    for w, c in terms[1:]:
        if w.shape != shape:
            raise ShapeMismatchError(f"{w.shape} != {shape}")
        acc = acc + c * w.values
    return WeightVector(acc, shape)
