"""Named-data protocol types: content names, Interest/Data packets,
and the three per-node tables (FIB, PIT, Content Store).

Names are slash-separated component paths with an optional trailing
chunk component: an explicit label "C<n>" (1-based), the coded-chunk
marker "NCChunk", or nothing (a bare prefix implicitly requests the
first chunk).
"""

from __future__ import annotations

import re
import struct
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .ncproto import NcInterestDigest

NC_CHUNK = "NCChunk"
_CHUNK_LABEL = re.compile(r"^C([0-9]+)$")


class NameParseError(ValueError):
    pass


@dataclass(frozen=True)
class ContentName:
    components: tuple[str, ...]
    chunk: int | None = None
    nc: bool = False

    def __post_init__(self):
        if not self.components or any(not c for c in self.components):
            raise NameParseError("name needs at least one non-empty component")
        if self.chunk is not None and self.chunk < 1:
            raise NameParseError("chunk numbers start at C1")
        if self.chunk is not None and self.nc:
            raise NameParseError("name cannot be both a chunk and the NC marker")

    @classmethod
    def parse(cls, text: str) -> "ContentName":
        parts = [p for p in text.split("/") if p]
        if not parts:
            raise NameParseError(f"empty name: {text!r}")
        chunk = None
        nc = False
        last = parts[-1]
        if last == NC_CHUNK:
            nc = True
            parts = parts[:-1]
        else:
            m = _CHUNK_LABEL.match(last)
            if m:
                chunk = int(m.group(1))
                if chunk < 1:
                    raise NameParseError(f"chunk numbers start at C1: {text!r}")
                parts = parts[:-1]
        if not parts:
            raise NameParseError(f"name has no object components: {text!r}")
        return cls(components=tuple(parts), chunk=chunk, nc=nc)

    def __str__(self) -> str:
        base = "/".join(self.components)
        if self.nc:
            return f"{base}/{NC_CHUNK}"
        if self.chunk is not None:
            return f"{base}/C{self.chunk}"
        return base

    @property
    def object_key(self) -> str:
        return "/".join(self.components)

    def bare(self) -> "ContentName":
        return ContentName(self.components)

    def with_chunk(self, n: int) -> "ContentName":
        return ContentName(self.components, chunk=n)

    def with_nc(self) -> "ContentName":
        return ContentName(self.components, nc=True)

    def is_prefix_of(self, other: "ContentName") -> bool:
        return self.components == other.components[: len(self.components)]


@dataclass(frozen=True)
class ChunkRequest:
    """What an Interest name asks for after implicit-name resolution."""

    kind: str  # "plain" | "coded"
    chunk: int | None = None


def name_resolve_implicit(name: ContentName) -> ChunkRequest:
    """Bare prefix -> first chunk; "C<n>" -> chunk n; NC marker -> coded."""
    if name.nc:
        return ChunkRequest(kind="coded")
    if name.chunk is None:
        return ChunkRequest(kind="plain", chunk=1)
    if name.chunk < 1:
        raise NameParseError(f"chunk numbers start at C1: {name}")
    return ChunkRequest(kind="plain", chunk=name.chunk)


@dataclass(frozen=True)
class Selector:
    nc_flag: bool = False
    dof_digest: "NcInterestDigest | None" = None
    order_required: bool = False

    def __post_init__(self):
        if self.dof_digest is not None and not self.nc_flag:
            raise ValueError("DoF digest only travels with the NC flag set")
        if self.order_required and self.nc_flag:
            raise ValueError("ordered delivery disables network coding")


@dataclass(frozen=True)
class Interest:
    name: ContentName
    selector: Selector
    nonce: int

    @property
    def wire_size(self) -> int:
        digest = self.selector.dof_digest
        digest_len = 12 + len(digest.rows) * digest.k if digest is not None else 0
        return 16 + len(str(self.name)) + digest_len


@dataclass(frozen=True)
class SignedInfo:
    """Data packet metadata: a plain chunk index or coding metadata."""

    chunk_number: int | None = None
    total_chunks: int | None = None
    gen_id: int | None = None
    k: int | None = None
    vector: bytes | None = None
    first_chunk: int | None = None

    @property
    def is_coded(self) -> bool:
        return self.vector is not None

    def coding_bytes(self) -> bytes:
        """Wire layout of the coding metadata: gen_id (8), k (2), k coefficients."""
        if not self.is_coded:
            raise ValueError("no coding metadata on a plain chunk")
        return struct.pack(">QH", self.gen_id, self.k) + self.vector

    @classmethod
    def from_coding_bytes(cls, raw: bytes, **extra: Any) -> "SignedInfo":
        gen_id, k = struct.unpack(">QH", raw[:10])
        vector = raw[10:10 + k]
        if len(vector) != k:
            raise ValueError("truncated coding metadata")
        return cls(gen_id=gen_id, k=k, vector=bytes(vector), **extra)


@dataclass(frozen=True)
class DataPacket:
    name: ContentName
    signed_info: SignedInfo
    payload: bytes
    signature: bytes = b""  # opaque placeholder, never verified

    @property
    def wire_size(self) -> int:
        vec = len(self.signed_info.vector) if self.signed_info.is_coded else 0
        return 24 + len(str(self.name)) + vec + len(self.payload)


class Fib:
    """Name-prefix routing table; longest prefix wins, face order breaks ties."""

    def __init__(self):
        self._entries: dict[tuple[str, ...], list[int]] = {}

    def add_route(self, prefix: tuple[str, ...], face: int) -> None:
        faces = self._entries.setdefault(tuple(prefix), [])
        if face not in faces:
            faces.append(face)

    def lookup(self, name: ContentName) -> list[int]:
        comps = name.components
        for end in range(len(comps), 0, -1):
            faces = self._entries.get(comps[:end])
            if faces:
                return list(faces)
        return []

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class PitEntry:
    faces: list[int] = field(default_factory=list)
    nonces: set[int] = field(default_factory=set)
    created: float = 0.0


class Pit:
    """Pending Interest Table keyed on the full name, chunk/NC component included."""

    def __init__(self, lifetime: float = 4.0):
        self.lifetime = lifetime
        self._entries: dict[str, PitEntry] = {}
        self.expired = 0

    def _drop_expired(self, now: float) -> None:
        stale = [k for k, e in self._entries.items() if e.created + self.lifetime <= now]
        for k in stale:
            del self._entries[k]
            self.expired += 1

    def lookup(self, name: ContentName, now: float) -> PitEntry | None:
        self._drop_expired(now)
        return self._entries.get(str(name))

    def create(self, name: ContentName, face: int | None, nonce: int, now: float) -> PitEntry:
        entry = PitEntry(created=now)
        if face is not None:
            entry.faces.append(face)
        entry.nonces.add(nonce)
        self._entries[str(name)] = entry
        return entry

    def add_face(self, entry: PitEntry, face: int | None, nonce: int) -> None:
        if face is not None and face not in entry.faces:
            entry.faces.append(face)
        entry.nonces.add(nonce)

    def consume_matching(self, data: DataPacket, now: float) -> list[int]:
        """Remove every entry the Data satisfies; return requesting faces in order."""
        self._drop_expired(now)
        keys = [str(data.name)]
        if data.name.chunk == 1:
            keys.append(data.name.object_key)  # bare-name implicit request
        faces: list[int] = []
        hit = False
        for key in keys:
            entry = self._entries.pop(key, None)
            if entry is None:
                continue
            hit = True
            for f in entry.faces:
                if f not in faces:
                    faces.append(f)
        if not hit:
            return []
        return faces

    def __len__(self) -> int:
        return len(self._entries)


class ContentStore:
    """Exact-LRU store of sized entries (plain chunks and coded generations).

    Capacity is counted in chunks; a coded entry weighs its current rank.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: "OrderedDict[Any, tuple[Any, int]]" = OrderedDict()
        self._total = 0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def total_size(self) -> int:
        return self._total

    def get(self, key: Any, touch: bool = True) -> Any | None:
        item = self._entries.get(key)
        if item is None:
            return None
        if touch:
            self._entries.move_to_end(key)
        return item[0]

    def keys(self):
        return self._entries.keys()

    def put(self, key: Any, entry: Any, size: int) -> bool:
        """Insert or replace; returns False if the entry cannot fit at all."""
        if key in self._entries:
            self._total -= self._entries.pop(key)[1]
        if size > self.capacity:
            self.evictions += 1
            return False
        self._entries[key] = (entry, size)
        self._total += size
        self._evict()
        return True

    def resize(self, key: Any, size: int) -> bool:
        """Update an entry's weight (coded entry rank grew); may evict others."""
        if key not in self._entries:
            return False
        entry, old = self._entries.pop(key)
        self._total -= old
        return self.put(key, entry, size)

    def _evict(self) -> None:
        while self._total > self.capacity:
            _, (_, size) = self._entries.popitem(last=False)
            self._total -= size
            self.evictions += 1


class NonceMemory:
    """Sliding window of the most recent (name, nonce) pairs seen."""

    def __init__(self, capacity: int = 65536):
        self.capacity = capacity
        self._seen: set[tuple[str, int]] = set()
        self._order: deque[tuple[str, int]] = deque()

    def seen_before(self, name: ContentName, nonce: int) -> bool:
        key = (str(name), nonce)
        if key in self._seen:
            return True
        self._seen.add(key)
        self._order.append(key)
        if len(self._order) > self.capacity:
            self._seen.discard(self._order.popleft())
        return False
