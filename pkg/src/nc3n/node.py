"""Per-node forwarding engine: Interest/Data handling over FIB, PIT and
Content Store, with the network-coding response and caching paths.

Handlers mutate node state and return the actions the transport layer
must carry out (replies, forwards, broadcasts); this keeps the protocol
decisions testable without an event loop.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from . import ncproto
from .ccn import (ContentName, ContentStore, DataPacket, Fib, Interest, NameParseError,
                  NonceMemory, Pit, SignedInfo, name_resolve_implicit)
from .ncproto import CacheEffect, CodedStoreEntry
from .rlnc import Generation


def derive_gen_id_base(object_key: str) -> int:
    """Stable 64-bit generation-id base for an object name."""
    digest = hashlib.blake2b(object_key.encode(), digest_size=8).digest()
    # Top bits kept clear so per-generation offsets never wrap.
    return int.from_bytes(digest, "big") & 0x7FFFFFFFFFFF0000


@dataclass
class RepoObject:
    """A complete object held by a repository: raw chunks plus generations."""

    name: ContentName
    chunks: list[bytes]
    k: int
    chunk_size: int
    generations: list[Generation]

    @classmethod
    def build(cls, name: str | ContentName, data: bytes | list[bytes], *,
              k: int, chunk_size: int) -> "RepoObject":
        cname = ContentName.parse(name) if isinstance(name, str) else name.bare()
        if isinstance(data, bytes):
            chunks = [data[i:i + chunk_size] for i in range(0, len(data), chunk_size)]
        else:
            chunks = list(data)
        gens = ncproto.coding_window(chunks, k, chunk_size=chunk_size,
                                     gen_id_base=derive_gen_id_base(cname.object_key))
        return cls(name=cname, chunks=chunks, k=k, chunk_size=chunk_size,
                   generations=gens)

    @property
    def total_chunks(self) -> int:
        return len(self.chunks)

    def chunk(self, n: int) -> bytes | None:
        if 1 <= n <= len(self.chunks):
            return self.chunks[n - 1]
        return None

    def generation_by_id(self, gen_id: int) -> Generation | None:
        for gen in self.generations:
            if gen.gen_id == gen_id:
                return gen
        return None

    def first_chunk_of(self, gen: Generation) -> int:
        return self.generations.index(gen) * self.k + 1


# --- actions returned by the handlers ---------------------------------------

@dataclass(frozen=True)
class ReplyFromStore:
    face: int | None
    data: DataPacket


@dataclass(frozen=True)
class Aggregate:
    name: str


@dataclass(frozen=True)
class ForwardInterest:
    faces: tuple[int, ...]
    interest: Interest


@dataclass(frozen=True)
class BroadcastInterest:
    faces: tuple[int, ...]
    interest: Interest


@dataclass(frozen=True)
class DropDuplicate:
    nonce: int


@dataclass(frozen=True)
class ForwardData:
    faces: tuple[int, ...]
    data: DataPacket


@dataclass(frozen=True)
class CacheInsert:
    key: str
    effect: str


@dataclass(frozen=True)
class DiscardDuplicate:
    pass


@dataclass(frozen=True)
class DiscardUnsolicited:
    pass


Action = (ReplyFromStore | Aggregate | ForwardInterest | BroadcastInterest
          | DropDuplicate | ForwardData | CacheInsert | DiscardDuplicate
          | DiscardUnsolicited)


@dataclass
class NodeConfig:
    nc_enabled: bool = True
    cache_coded: bool = True
    cache_capacity: int = 64
    whole_object_only: bool = False
    route_learning: bool = True
    pit_lifetime: float = 4.0
    responder_retries: int = 8


@dataclass
class Counters:
    interests_received: int = 0
    data_received: int = 0
    duplicate_interests: int = 0
    malformed: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    pit_aggregations: int = 0
    broadcasts: int = 0
    no_route: int = 0
    nc_responses: int = 0
    nc_no_new_dof: int = 0
    duplicate_data: int = 0
    unsolicited_data: int = 0
    coded_stored: int = 0
    coded_redundant: int = 0
    decoded_generations: int = 0

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class Node:
    """A router or repository driven by the simulator's event loop."""

    def __init__(self, node_id: str, config: NodeConfig | None = None,
                 rng: random.Random | None = None):
        self.id = node_id
        self.config = config or NodeConfig()
        self.rng = rng or random.Random(0)
        self.faces: list[int] = []
        self.fib = Fib()
        self.pit = Pit(lifetime=self.config.pit_lifetime)
        self.store = ContentStore(self.config.cache_capacity)
        self.repo: dict[str, RepoObject] = {}
        self.counters = Counters()
        self._nonces = NonceMemory()

    def attach_face(self, face: int) -> None:
        if face not in self.faces:
            self.faces.append(face)

    def add_repo_object(self, obj: RepoObject) -> None:
        self.repo[obj.name.object_key] = obj

    # --- Interest path -------------------------------------------------

    def handle_interest(self, interest: Interest, in_face: int | None,
                        now: float) -> list[Action]:
        self.counters.interests_received += 1
        if self._nonces.seen_before(interest.name, interest.nonce):
            self.counters.duplicate_interests += 1
            return [DropDuplicate(interest.nonce)]
        try:
            request = name_resolve_implicit(interest.name)
        except NameParseError:
            self.counters.malformed += 1
            return []

        reply = self._try_serve(interest, request, in_face)
        if reply is not None:
            self.counters.cache_hits += 1
            return [reply]
        self.counters.cache_misses += 1

        entry = self.pit.lookup(interest.name, now)
        if entry is not None:
            self.pit.add_face(entry, in_face, interest.nonce)
            self.counters.pit_aggregations += 1
            return [Aggregate(str(interest.name))]

        fib_faces = [f for f in self.fib.lookup(interest.name) if f != in_face]
        if fib_faces:
            self.pit.create(interest.name, in_face, interest.nonce, now)
            return [ForwardInterest((fib_faces[0],), interest)]

        bcast = tuple(f for f in self.faces if f != in_face)
        if bcast:
            self.pit.create(interest.name, in_face, interest.nonce, now)
            self.counters.broadcasts += 1
            return [BroadcastInterest(bcast, interest)]
        self.counters.no_route += 1
        return []

    def _try_serve(self, interest: Interest, request, in_face: int | None):
        if request.kind == "coded":
            return self._try_serve_coded(interest, in_face)
        return self._try_serve_plain(interest, request.chunk, in_face)

    def _try_serve_plain(self, interest: Interest, n: int,
                         in_face: int | None) -> ReplyFromStore | None:
        okey = interest.name.object_key
        obj = self.repo.get(okey)
        if obj is not None:
            payload = obj.chunk(n)
            if payload is not None:
                info = SignedInfo(chunk_number=n, total_chunks=obj.total_chunks)
                data = DataPacket(name=interest.name.with_chunk(n),
                                  signed_info=info, payload=payload)
                return ReplyFromStore(face=in_face, data=data)
            return None

        cached = self.store.get(("chunk", okey, n))
        if cached is not None:
            payload, total = cached
            if self.config.whole_object_only and not self._holds_whole_object(okey, total):
                return None
            info = SignedInfo(chunk_number=n, total_chunks=total)
            data = DataPacket(name=interest.name.with_chunk(n),
                              signed_info=info, payload=payload)
            return ReplyFromStore(face=in_face, data=data)

        # A decoded coded generation answers plain-chunk Interests too.
        if self.config.nc_enabled and not self.config.whole_object_only:
            for key in list(self.store.keys()):
                if key[0] != "gen":
                    continue
                entry = self.store.get(key, touch=False)
                if entry.object_key != okey:
                    continue
                payload = entry.plain_chunk(n)
                if payload is not None:
                    self.store.get(key)  # touch
                    info = SignedInfo(chunk_number=n, gen_id=None)
                    data = DataPacket(name=interest.name.with_chunk(n),
                                      signed_info=info, payload=payload)
                    return ReplyFromStore(face=in_face, data=data)
        return None

    def _holds_whole_object(self, okey: str, total: int | None) -> bool:
        if not total:
            return False
        return all(self.store.get(("chunk", okey, i), touch=False) is not None
                   for i in range(1, total + 1))

    def _try_serve_coded(self, interest: Interest,
                         in_face: int | None) -> ReplyFromStore | None:
        if not (interest.selector.nc_flag and self.config.nc_enabled):
            return None
        digest = interest.selector.dof_digest
        if digest is None:
            return None
        okey = interest.name.object_key
        source: Generation | CodedStoreEntry | None = None
        first_chunk = None
        total = None
        obj = self.repo.get(okey)
        if obj is not None:
            gen = obj.generation_by_id(digest.gen_id)
            if gen is not None:
                source = gen
                first_chunk = obj.first_chunk_of(gen)
                total = obj.total_chunks
        if source is None:
            entry = self.store.get(("gen", digest.gen_id))
            if entry is not None and entry.object_key == okey:
                source = entry
        if source is None:
            return None
        data = ncproto.respond_nc(source, interest, self.rng,
                                  retries=self.config.responder_retries,
                                  first_chunk=first_chunk, total_chunks=total)
        if data is None:
            self.counters.nc_no_new_dof += 1
            return None
        self.counters.nc_responses += 1
        return ReplyFromStore(face=in_face, data=data)

    # --- Data path -------------------------------------------------------

    def handle_data(self, data: DataPacket, in_face: int | None,
                    now: float) -> list[Action]:
        self.counters.data_received += 1
        if self.config.route_learning and in_face is not None:
            self.fib.add_route(data.name.components, in_face)

        faces = self.pit.consume_matching(data, now)
        actions: list[Action] = []
        coded = data.signed_info.is_coded

        if coded:
            if self.config.nc_enabled and self.config.cache_coded:
                effect = ncproto.cache_coded(self.store, data)
                if effect is CacheEffect.DROPPED_REDUNDANT:
                    self.counters.coded_redundant += 1
                else:
                    self.counters.coded_stored += 1
                    if effect is CacheEffect.DECODED:
                        self.counters.decoded_generations += 1
                actions.append(CacheInsert(key=f"gen:{data.signed_info.gen_id}",
                                           effect=effect.value))
        elif faces:
            self._store_plain(data)
            actions.append(CacheInsert(key=str(data.name), effect="stored-plain"))

        if faces:
            out = tuple(f for f in faces if f != in_face)
            if out:
                actions.append(ForwardData(out, data))
            return actions

        if not coded:
            n = data.signed_info.chunk_number
            if n is not None and self.store.get(("chunk", data.name.object_key, n),
                                                touch=False) is not None:
                self.counters.duplicate_data += 1
                actions.append(DiscardDuplicate())
            else:
                self.counters.unsolicited_data += 1
                actions.append(DiscardUnsolicited())
        elif not (self.config.nc_enabled and self.config.cache_coded):
            self.counters.unsolicited_data += 1
            actions.append(DiscardUnsolicited())
        return actions

    def _store_plain(self, data: DataPacket) -> None:
        n = data.signed_info.chunk_number
        if n is None:
            return
        key = ("chunk", data.name.object_key, n)
        self.store.put(key, (data.payload, data.signed_info.total_chunks), 1)
