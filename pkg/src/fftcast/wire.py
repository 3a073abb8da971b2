"""Binary layout of node -> controller update messages.

Little-endian: ``node_id u32, batch_index u32, n u16, k u16`` followed by ``k``
(real, imag) binary64 pairs, i.e. ``12 + 16 k`` bytes per message.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError
from .spectral import TruncatedSpectrum

HEADER = struct.Struct("<IIHH")
COEFF_DTYPE = np.dtype("<c16")


@dataclass(frozen=True, eq=False)
class UpdateMessage:
    node_id: int
    batch_index: int
    spectrum: TruncatedSpectrum

    @property
    def n(self):
        return self.spectrum.n

    @property
    def k(self):
        return self.spectrum.k

    @property
    def coefficients(self):
        return self.spectrum.coefficients

    def __eq__(self, other):
        if not isinstance(other, UpdateMessage):
            return NotImplemented
        return (self.node_id, self.batch_index) == (other.node_id, other.batch_index) and (
            self.spectrum == other.spectrum
        )

    __hash__ = None


def message_size(k):
    return HEADER.size + COEFF_DTYPE.itemsize * k


def encode_message(msg):
    n, k = msg.n, msg.k
    if k > n // 2 + 1:
        raise InvalidInputError(f"k={k} exceeds n/2+1 for n={n}")
    if not (0 <= msg.node_id < 2**32 and 0 <= msg.batch_index < 2**32 and n < 2**16):
        raise InvalidInputError("message header field out of range")
    head = HEADER.pack(msg.node_id, msg.batch_index, n, k)
    return head + np.ascontiguousarray(msg.coefficients, dtype=COEFF_DTYPE).tobytes()


def decode_message(data, offset=0):
    """Decode one message starting at ``offset``; returns ``(message, next_offset)``."""
    if len(data) - offset < HEADER.size:
        raise InvalidInputError("truncated message header")
    node_id, batch_index, n, k = HEADER.unpack_from(data, offset)
    end = offset + message_size(k)
    if len(data) < end:
        raise InvalidInputError(f"message declares k={k} but payload is short")
    if k > n // 2 + 1:
        raise InvalidInputError(f"k={k} exceeds n/2+1 for n={n}")
    coeffs = np.frombuffer(data, dtype=COEFF_DTYPE, count=k, offset=offset + HEADER.size)
    msg = UpdateMessage(node_id, batch_index, TruncatedSpectrum(coeffs.astype(np.complex128), n))
    return msg, end


def decode_stream(data):
    out, offset = [], 0
    while offset < len(data):
        msg, offset = decode_message(data, offset)
        out.append(msg)
    return out
