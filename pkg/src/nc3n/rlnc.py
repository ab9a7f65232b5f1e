"""Generation-based random linear network coding over GF(2^8).

A generation groups k source chunks of equal (padded) size.  Encoders
emit coded chunks carrying a k-coefficient coding vector; the decoder
absorbs chunks one at a time, keeping its received vectors in reduced
row-echelon form so that rank (degrees of freedom) and innovativeness
checks are a single elimination pass.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

import numpy as np

from . import gf256

_MAX_REDRAWS = 256


class InsufficientRankError(Exception):
    """Decode attempted with fewer degrees of freedom than k."""

    def __init__(self, gen_id: int, rank: int, k: int):
        super().__init__(
            f"insufficient degrees of freedom for generation {gen_id}: rank {rank} < k {k}"
        )
        self.gen_id = gen_id
        self.rank = rank
        self.k = k


@dataclass(frozen=True)
class Generation:
    """k source chunks coded together, zero-padded to a common size."""

    gen_id: int
    chunk_size: int
    chunks: tuple[bytes, ...]
    original_lengths: tuple[int, ...]

    @classmethod
    def from_chunks(cls, gen_id: int, chunks: list[bytes] | tuple[bytes, ...],
                    chunk_size: int | None = None) -> "Generation":
        if not chunks:
            raise ValueError("generation needs at least one source chunk")
        lengths = tuple(len(c) for c in chunks)
        size = chunk_size if chunk_size is not None else max(lengths)
        if size < 1:
            raise ValueError("chunk_size must be at least 1")
        if any(n > size for n in lengths):
            raise ValueError("source chunk longer than chunk_size")
        padded = tuple(c + b"\x00" * (size - len(c)) for c in chunks)
        return cls(gen_id=gen_id, chunk_size=size, chunks=padded,
                   original_lengths=lengths)

    @property
    def k(self) -> int:
        return len(self.chunks)

    def source_matrix(self) -> np.ndarray:
        return np.frombuffer(b"".join(self.chunks), dtype=np.uint8).reshape(
            self.k, self.chunk_size).copy()


@dataclass(frozen=True)
class CodedChunk:
    """A payload plus the coding vector describing it as a combination."""

    gen_id: int
    vector: bytes
    payload: bytes

    @property
    def k(self) -> int:
        return len(self.vector)

    def to_bytes(self) -> bytes:
        return (struct.pack(">QHI", self.gen_id, len(self.vector), len(self.payload))
                + self.vector + self.payload)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CodedChunk":
        gen_id, k, chunk_size = struct.unpack(">QHI", raw[:14])
        vector = raw[14:14 + k]
        payload = raw[14 + k:14 + k + chunk_size]
        if len(vector) != k or len(payload) != chunk_size:
            raise ValueError("truncated coded chunk")
        return cls(gen_id=gen_id, vector=bytes(vector), payload=bytes(payload))


def combine(vectors: list[bytes], payloads: list[bytes], coeffs: bytes) -> tuple[bytes, bytes]:
    """GF(256) combination sum_i coeffs[i] * (vectors[i], payloads[i])."""
    if not (len(vectors) == len(payloads) == len(coeffs)):
        raise ValueError("coefficient count must match chunk count")
    vec = np.zeros(len(vectors[0]), dtype=np.uint8)
    pay = np.zeros(len(payloads[0]), dtype=np.uint8)
    for c, v, p in zip(coeffs, vectors, payloads):
        if c == 0:
            continue
        gf256.addmul(vec, c, np.frombuffer(v, dtype=np.uint8))
        gf256.addmul(pay, c, np.frombuffer(p, dtype=np.uint8))
    return vec.tobytes(), pay.tobytes()


def encode_random(gen: Generation, rng: random.Random) -> CodedChunk:
    """Uniformly random combination of the generation's sources.

    All-zero vectors are redrawn whole; a zero vector carries no
    information and is never transmitted.
    """
    if gen.k < 1:
        raise ValueError("empty generation")
    for _ in range(_MAX_REDRAWS):
        coeffs = rng.randbytes(gen.k)
        if any(coeffs):
            break
    else:
        raise RuntimeError("random source kept producing all-zero vectors")
    pay = np.zeros(gen.chunk_size, dtype=np.uint8)
    for c, chunk in zip(coeffs, gen.chunks):
        if c:
            gf256.addmul(pay, c, np.frombuffer(chunk, dtype=np.uint8))
    return CodedChunk(gen_id=gen.gen_id, vector=coeffs, payload=pay.tobytes())


def encode_systematic(gen: Generation, index: int) -> CodedChunk:
    """Source chunk `index` sent uncoded, i.e. with unit coding vector."""
    if not 0 <= index < gen.k:
        raise ValueError(f"systematic index {index} out of range for k={gen.k}")
    vector = bytes(1 if i == index else 0 for i in range(gen.k))
    return CodedChunk(gen_id=gen.gen_id, vector=vector, payload=gen.chunks[index])


def recode(held: list[CodedChunk], rng: random.Random) -> CodedChunk:
    """Fresh random combination of already-coded chunks (no decoding).

    The result's vector lies in the span of the held vectors.
    """
    if not held:
        raise ValueError("cannot recode from an empty set of chunks")
    gen_id = held[0].gen_id
    k = held[0].k
    if any(c.gen_id != gen_id for c in held):
        raise ValueError("recode across mixed generations")
    if any(c.k != k for c in held):
        raise ValueError("recode across mismatched vector lengths")
    vectors = [c.vector for c in held]
    payloads = [c.payload for c in held]
    for _ in range(_MAX_REDRAWS):
        coeffs = rng.randbytes(len(held))
        vec, pay = combine(vectors, payloads, coeffs)
        if any(vec):
            return CodedChunk(gen_id=gen_id, vector=vec, payload=pay)
    raise RuntimeError("recoding kept producing all-zero vectors")


@dataclass
class DecoderState:
    """Received coding vectors in reduced row-echelon form.

    Payload rows are transformed in lockstep with the vector rows, so a
    full-rank basis is the identity and the payload rows are the sources.
    """

    gen_id: int
    k: int
    chunk_size: int
    _rows: np.ndarray = field(init=False, repr=False)
    _payloads: np.ndarray = field(init=False, repr=False)
    _pivots: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        self._rows = np.zeros((self.k, self.k), dtype=np.uint8)
        self._payloads = np.zeros((self.k, self.chunk_size), dtype=np.uint8)
        self._pivots = []

    @classmethod
    def from_rows(cls, gen_id: int, k: int, rows: list[bytes],
                  chunk_size: int = 0) -> "DecoderState":
        state = cls(gen_id=gen_id, k=k, chunk_size=chunk_size)
        for row in rows:
            state._absorb(np.frombuffer(row, dtype=np.uint8).copy(),
                          np.zeros(chunk_size, dtype=np.uint8))
        return state

    @property
    def rank(self) -> int:
        return len(self._pivots)

    @property
    def decodable(self) -> bool:
        return self.rank == self.k

    def basis(self) -> list[bytes]:
        """Current row-reduced basis rows, pivot order."""
        return [self._rows[i].tobytes() for i in range(self.rank)]

    def _reduce(self, vec: np.ndarray, pay: np.ndarray | None) -> None:
        for i, p in enumerate(self._pivots):
            c = vec[p]
            if c:
                np.bitwise_xor(vec, gf256.MUL_TABLE[c][self._rows[i]], out=vec)
                if pay is not None:
                    np.bitwise_xor(pay, gf256.MUL_TABLE[c][self._payloads[i]], out=pay)

    def _absorb(self, vec: np.ndarray, pay: np.ndarray) -> bool:
        self._reduce(vec, pay)
        nz = np.nonzero(vec)[0]
        if nz.size == 0:
            return False
        lead = int(nz[0])
        c = gf256.inv(int(vec[lead]))
        vec = gf256.MUL_TABLE[c][vec]
        pay = gf256.MUL_TABLE[c][pay]
        # Clear the new pivot column from existing rows to stay in RREF.
        for i in range(self.rank):
            f = self._rows[i][lead]
            if f:
                np.bitwise_xor(self._rows[i], gf256.MUL_TABLE[f][vec], out=self._rows[i])
                np.bitwise_xor(self._payloads[i], gf256.MUL_TABLE[f][pay],
                               out=self._payloads[i])
        pos = 0
        while pos < self.rank and self._pivots[pos] < lead:
            pos += 1
        r = self.rank
        self._rows[pos + 1:r + 1] = self._rows[pos:r].copy()
        self._payloads[pos + 1:r + 1] = self._payloads[pos:r].copy()
        self._rows[pos] = vec
        self._payloads[pos] = pay
        self._pivots.insert(pos, lead)
        return True

    def add_chunk(self, chunk: CodedChunk) -> bool:
        """One Gaussian-elimination step; True iff the chunk was innovative."""
        if chunk.gen_id != self.gen_id:
            raise ValueError(f"generation mismatch: chunk {chunk.gen_id} vs state {self.gen_id}")
        if chunk.k != self.k:
            raise ValueError(f"vector length {chunk.k} != k {self.k}")
        if len(chunk.payload) != self.chunk_size:
            raise ValueError("payload size mismatch")
        vec = np.frombuffer(chunk.vector, dtype=np.uint8).copy()
        pay = np.frombuffer(chunk.payload, dtype=np.uint8).copy()
        return self._absorb(vec, pay)

    def is_innovative(self, vector: bytes) -> bool:
        """Pure check: True iff the vector lies outside the current span."""
        if len(vector) != self.k:
            raise ValueError(f"vector length {len(vector)} != k {self.k}")
        vec = np.frombuffer(vector, dtype=np.uint8).copy()
        self._reduce(vec, None)
        return bool(vec.any())

    def decode(self) -> list[bytes]:
        """Original source chunks in index order; requires full rank."""
        if self.rank < self.k:
            raise InsufficientRankError(self.gen_id, self.rank, self.k)
        # Full-rank RREF over k columns is the identity, pivots 0..k-1.
        return [self._payloads[i].tobytes() for i in range(self.k)]

    def recovered_sources(self) -> dict[int, bytes]:
        """Sources already pinned down by unit rows (partial decoding)."""
        out: dict[int, bytes] = {}
        for i, p in enumerate(self._pivots):
            row = self._rows[i]
            if row[p] == 1 and int(np.count_nonzero(row)) == 1:
                out[p] = self._payloads[i].tobytes()
        return out

    def held_chunks(self) -> list[CodedChunk]:
        """Current basis rows as coded chunks (for recoding/serving)."""
        return [
            CodedChunk(gen_id=self.gen_id, vector=self._rows[i].tobytes(),
                       payload=self._payloads[i].tobytes())
            for i in range(self.rank)
        ]
