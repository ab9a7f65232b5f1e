"""Network-coding extension to the named-data plane.

Interests gain an NC flag and a degrees-of-freedom digest (the
requester's current row-reduced basis); Data packets gain coding
metadata in their SignedInfo.  A responder answers only if it can
supply a combination that is innovative with respect to the digest,
and intermediate nodes absorb coded chunks into a per-generation
store, decoding opportunistically once they hold full rank.
"""

from __future__ import annotations

import enum
import random
import struct
from dataclasses import dataclass, field

from . import rlnc
from .ccn import ContentName, ContentStore, DataPacket, Interest, Selector, SignedInfo
from .rlnc import CodedChunk, DecoderState, Generation

RESPONDER_RETRIES = 8


@dataclass(frozen=True)
class NcInterestDigest:
    """Row-reduced basis advertised in an Interest Selector."""

    gen_id: int
    k: int
    rows: tuple[bytes, ...] = ()

    def __post_init__(self):
        if any(len(r) != self.k for r in self.rows):
            raise ValueError("digest rows must have k coefficients")

    @property
    def rank(self) -> int:
        return len(self.rows)

    @classmethod
    def from_state(cls, state: DecoderState) -> "NcInterestDigest":
        return cls(gen_id=state.gen_id, k=state.k, rows=tuple(state.basis()))

    def to_state(self) -> DecoderState:
        return DecoderState.from_rows(self.gen_id, self.k, list(self.rows))

    def to_bytes(self) -> bytes:
        return (struct.pack(">QHH", self.gen_id, self.k, self.rank)
                + b"".join(self.rows))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "NcInterestDigest":
        gen_id, k, rank = struct.unpack(">QHH", raw[:12])
        body = raw[12:12 + rank * k]
        if len(body) != rank * k:
            raise ValueError("truncated digest")
        rows = tuple(bytes(body[i * k:(i + 1) * k]) for i in range(rank))
        return cls(gen_id=gen_id, k=k, rows=rows)


class CacheEffect(enum.Enum):
    STORED_INNOVATIVE = "stored-innovative"
    DROPPED_REDUNDANT = "dropped-redundant"
    DECODED = "decoded"


@dataclass
class CodedStoreEntry:
    """Coded chunks of one generation absorbed into a decoder state."""

    object_key: str
    gen_id: int
    k: int
    chunk_size: int
    first_chunk: int | None = None
    state: DecoderState = field(init=False)
    decoded: list[bytes] | None = None

    def __post_init__(self):
        self.state = DecoderState(gen_id=self.gen_id, k=self.k,
                                  chunk_size=self.chunk_size)

    @property
    def rank(self) -> int:
        return self.state.rank

    def absorb(self, chunk: CodedChunk) -> CacheEffect:
        if not self.state.add_chunk(chunk):
            return CacheEffect.DROPPED_REDUNDANT
        if self.state.decodable and self.decoded is None:
            self.decoded = self.state.decode()
            return CacheEffect.DECODED
        return CacheEffect.STORED_INNOVATIVE

    def plain_chunk(self, chunk_number: int) -> bytes | None:
        """Serve a decoded source by its 1-based object chunk number."""
        if self.decoded is None or self.first_chunk is None:
            return None
        idx = chunk_number - self.first_chunk
        if 0 <= idx < self.k:
            return self.decoded[idx]
        return None


def make_nc_interest(name: ContentName, state: DecoderState, nonce: int) -> Interest:
    """Interest with the NC flag set and the requester's basis as digest."""
    digest = NcInterestDigest.from_state(state)
    return Interest(name=name.bare().with_nc(),
                    selector=Selector(nc_flag=True, dof_digest=digest),
                    nonce=nonce)


def respond_nc(source: Generation | CodedStoreEntry, interest: Interest,
               rng: random.Random, *, retries: int = RESPONDER_RETRIES,
               first_chunk: int | None = None,
               total_chunks: int | None = None) -> DataPacket | None:
    """Draw a combination that is innovative w.r.t. the Interest digest.

    Up to `retries` random draws; if all fail, an exact span comparison
    decides: either a known-innovative row is sent or the responder
    stays silent because it holds no new degrees of freedom.
    """
    if not interest.selector.nc_flag:
        raise ValueError("responding with coded data requires the NC flag")
    digest = interest.selector.dof_digest
    if digest is None:
        raise ValueError("NC interest carries no DoF digest")

    if isinstance(source, Generation):
        gen_id, k = source.gen_id, source.k
        draw = lambda: rlnc.encode_random(source, rng)
        candidates = lambda: (rlnc.encode_systematic(source, i) for i in range(k))
    else:
        gen_id, k = source.gen_id, source.k
        if first_chunk is None:
            first_chunk = source.first_chunk
        held = source.state.held_chunks()
        if not held:
            return None
        draw = lambda: rlnc.recode(held, rng)
        candidates = lambda: iter(held)

    if digest.gen_id != gen_id or digest.k != k:
        raise ValueError(f"digest generation {digest.gen_id}/{digest.k} does not "
                         f"match source {gen_id}/{k}")

    check = digest.to_state()
    chunk: CodedChunk | None = None
    for _ in range(retries):
        attempt = draw()
        if check.is_innovative(attempt.vector):
            chunk = attempt
            break
    if chunk is None:
        # Exact fallback: any held/systematic row outside the digest span.
        chunk = next((c for c in candidates() if check.is_innovative(c.vector)), None)
        if chunk is None:
            return None
    info = SignedInfo(gen_id=gen_id, k=k, vector=chunk.vector,
                      first_chunk=first_chunk, total_chunks=total_chunks)
    return DataPacket(name=interest.name, signed_info=info, payload=chunk.payload)


def cache_coded(store: ContentStore, data: DataPacket) -> CacheEffect:
    """Absorb a coded Data packet into the store's per-generation entry."""
    info = data.signed_info
    if not info.is_coded:
        raise ValueError("cache_coded needs coding metadata")
    key = ("gen", info.gen_id)
    entry: CodedStoreEntry | None = store.get(key)
    if entry is None:
        entry = CodedStoreEntry(object_key=data.name.object_key, gen_id=info.gen_id,
                                k=info.k, chunk_size=len(data.payload),
                                first_chunk=info.first_chunk)
        store.put(key, entry, 0)
    chunk = CodedChunk(gen_id=info.gen_id, vector=info.vector, payload=data.payload)
    effect = entry.absorb(chunk)
    store.resize(key, entry.rank)
    return effect


def coding_window(chunks: list[bytes], k: int, *, chunk_size: int | None = None,
                  gen_id_base: int = 1) -> list[Generation]:
    """Partition an object's chunks into consecutive k-sized generations.

    The final generation may be smaller; stream order is preserved so
    playout can start once the first generation decodes.
    """
    if k < 1:
        raise ValueError("window size must be at least 1")
    if not chunks:
        raise ValueError("no chunks to window")
    size = chunk_size if chunk_size is not None else max(len(c) for c in chunks)
    gens = []
    for i in range(0, len(chunks), k):
        gens.append(Generation.from_chunks(gen_id_base + len(gens),
                                           chunks[i:i + k], chunk_size=size))
    return gens
