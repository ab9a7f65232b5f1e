"""Arithmetic over GF(2^8) with the irreducible polynomial 0x11D.

Elements are integers in [0, 255].  Addition is XOR; multiplication is
carry-less polynomial multiplication reduced modulo
x^8 + x^4 + x^3 + x^2 + 1.  Log/antilog tables are built once at import
time (alpha = 0x02 generates the multiplicative group for this modulus),
and a full 256x256 product table is exposed for vectorised numpy use.
"""

from __future__ import annotations

import numpy as np

POLY = 0x11D
ORDER = 256

_EXP = [0] * 512
_LOG = [0] * 256

_x = 1
for _i in range(255):
    _EXP[_i] = _x
    _LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= POLY
for _i in range(255, 512):
    _EXP[_i] = _EXP[_i - 255]


def add(a: int, b: int) -> int:
    """Field addition (== subtraction): bitwise XOR."""
    return a ^ b


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("no inverse of zero")
    return _EXP[255 - _LOG[a]]


def div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return _EXP[(_LOG[a] - _LOG[b]) % 255]


def _build_mul_table() -> np.ndarray:
    log = np.array(_LOG, dtype=np.int32)
    exp = np.array(_EXP, dtype=np.uint8)
    sums = log[:, None] + log[None, :]
    table = exp[sums]
    table[0, :] = 0
    table[:, 0] = 0
    return table


# MUL_TABLE[a, b] == mul(a, b); MUL_TABLE[c][vec] scales a uint8 vector by c.
MUL_TABLE: np.ndarray = _build_mul_table()
MUL_TABLE.setflags(write=False)


def scale(c: int, data: np.ndarray) -> np.ndarray:
    """Elementwise product c * data for a uint8 array."""
    return MUL_TABLE[c][data]


def addmul(acc: np.ndarray, c: int, data: np.ndarray) -> None:
    """acc ^= c * data, in place."""
    np.bitwise_xor(acc, MUL_TABLE[c][data], out=acc)
