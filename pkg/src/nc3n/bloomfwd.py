"""In-packet Bloom-filter multicast forwarding with NC-enabled borders.

A multicast tree is encoded as the OR of sparse 256-bit link
identifiers; forwarding tests each outgoing link's identifier for
containment.  When two delivery trees overlap, border nodes can merge
them into one coded flow across the shared partition: the ingress
encodes windows of both flows, the egresses decode and restore the
parent flows and their forwarding identifiers.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from enum import Enum

import networkx as nx

from . import rlnc
from .rlnc import CodedChunk, DecoderState, Generation

M_BITS = 256
H_BITS = 5
ZFILTER_LEN = M_BITS // 8

Edge = tuple[str, str]


def _hash64(*parts: object) -> int:
    text = "|".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big")


def link_id(edge: Edge, seed: int) -> int:
    """Sparse identifier of a directed link: exactly H_BITS set positions."""
    positions: set[int] = set()
    counter = 0
    while len(positions) < H_BITS:
        positions.add(_hash64("link", edge[0], edge[1], seed, counter) % M_BITS)
        counter += 1
    bits = 0
    for p in positions:
        bits |= 1 << p
    return bits


def build_zfilter(tree: list[Edge] | tuple[Edge, ...], seed: int) -> int:
    """Constant-length tree encoding: OR of all edge identifiers."""
    bits = 0
    for edge in tree:
        bits |= link_id(edge, seed)
    return bits


def forward_match(zfilter: int, lid: int) -> bool:
    return (zfilter & lid) == lid


def fp_estimate(n_edges: int, m: int = M_BITS, h: int = H_BITS) -> float:
    """Classic Bloom false-positive estimate for n folded edges."""
    return (1.0 - (1.0 - 1.0 / m) ** (h * n_edges)) ** h


def zfilter_to_bytes(zfilter: int) -> bytes:
    return zfilter.to_bytes(ZFILTER_LEN, "big")


def zfilter_from_bytes(raw: bytes) -> int:
    if len(raw) != ZFILTER_LEN:
        raise ValueError(f"zFilter must be {ZFILTER_LEN} bytes")
    return int.from_bytes(raw, "big")


def new_flow_id(label: str, seed: int) -> int:
    return _hash64("flow", label, seed)


def derive_flow_id(a: int, b: int) -> int:
    """Deterministic id of the combined flow; symmetric in its parents."""
    if a == b:
        raise ValueError("a coded flow needs two distinct parents")
    lo, hi = min(a, b), max(a, b)
    return _hash64("derived", lo, hi)


# --- packets -----------------------------------------------------------------


@dataclass(frozen=True)
class FlowPacket:
    flow_id: int
    zfilter: int
    seq: int
    payload: bytes
    ttl: int = 32

    @property
    def wire_size(self) -> int:
        return 8 + ZFILTER_LEN + 4 + len(self.payload)

    def trace_fields(self) -> tuple[str, str, str, str]:
        return "DATA", f"flow/{self.flow_id:016x}", str(self.seq), ""


@dataclass(frozen=True)
class CodedFlowPacket:
    """A coded packet of a merged flow, plus everything the egress needs
    to restore the parents: ids, forwarding filters, source lengths."""

    flow_id: int
    zfilter: int
    gen_seq: int
    k: int
    vector: bytes  # 2k coefficients
    parent_a: int
    parent_b: int
    parent_filter_a: int
    parent_filter_b: int
    lengths: tuple[int, ...]  # 2k per-source original lengths
    payload: bytes
    ttl: int = 32

    def encap_bytes(self) -> bytes:
        if len(self.vector) != 2 * self.k or len(self.lengths) != 2 * self.k:
            raise ValueError("encapsulation needs 2k coefficients and lengths")
        head = struct.pack(">QIH", self.flow_id, self.gen_seq, self.k)
        parents = struct.pack(">QQ", self.parent_a, self.parent_b)
        filters = zfilter_to_bytes(self.parent_filter_a) + zfilter_to_bytes(self.parent_filter_b)
        lens = b"".join(struct.pack(">H", n) for n in self.lengths)
        return head + self.vector + parents + filters + lens + self.payload

    @classmethod
    def from_encap_bytes(cls, raw: bytes, zfilter: int = 0) -> "CodedFlowPacket":
        flow_id, gen_seq, k = struct.unpack(">QIH", raw[:14])
        off = 14
        vector = bytes(raw[off:off + 2 * k]); off += 2 * k
        parent_a, parent_b = struct.unpack(">QQ", raw[off:off + 16]); off += 16
        fa = zfilter_from_bytes(raw[off:off + ZFILTER_LEN]); off += ZFILTER_LEN
        fb = zfilter_from_bytes(raw[off:off + ZFILTER_LEN]); off += ZFILTER_LEN
        lengths = tuple(struct.unpack(">H", raw[off + 2 * i:off + 2 * i + 2])[0]
                        for i in range(2 * k))
        off += 4 * k
        return cls(flow_id=flow_id, zfilter=zfilter, gen_seq=gen_seq, k=k,
                   vector=vector, parent_a=parent_a, parent_b=parent_b,
                   parent_filter_a=fa, parent_filter_b=fb, lengths=lengths,
                   payload=bytes(raw[off:]))

    @property
    def wire_size(self) -> int:
        return ZFILTER_LEN + len(self.encap_bytes())

    def trace_fields(self) -> tuple[str, str, str, str]:
        return "DATA", f"flow/{self.flow_id:016x}", str(self.gen_seq), self.vector.hex()


# --- delivery-graph planning ---------------------------------------------------


class Trigger(Enum):
    FALSE_POSITIVE_RATE = "false_positive_rate"
    CONGESTION = "congestion"
    RESILIENCE = "resilience"


FP_TRIGGER_THRESHOLD = 0.01
CONGESTION_TRIGGER_UTILIZATION = 0.90


@dataclass(frozen=True)
class NcBinding:
    parent_a: int
    parent_b: int
    derived: int
    k: int
    ingress: str
    egress: tuple[str, ...]
    shared_edges: tuple[Edge, ...]
    a_only_edges: tuple[Edge, ...]
    b_only_edges: tuple[Edge, ...]
    filter_a_only: int
    filter_b_only: int
    filter_coded: int


def _entry_nodes(tree: list[Edge], pnodes: set[str], shared: set[Edge]) -> set[str]:
    entries = {v for (u, v) in tree if v in pnodes and (u, v) not in shared
               and u not in pnodes}
    if entries:
        return entries
    # Tree rooted inside the partition: its root is the entry point.
    heads = {u for u, _ in tree} - {v for _, v in tree}
    return heads & pnodes


def _exit_nodes(tree: list[Edge], pnodes: set[str], shared: set[Edge]) -> set[str]:
    residual = [e for e in tree if e not in shared]
    exits = {u for (u, v) in residual if u in pnodes}
    # Partition nodes where the flow simply terminates must decode too.
    outgoing = {u for (u, _) in tree}
    tree_nodes = outgoing | {v for _, v in tree}
    exits |= {n for n in pnodes if n in tree_nodes and n not in outgoing}
    return exits


def plan_coded_subgraph(topology: dict[Edge, float | None] | None,
                        tree_a: list[Edge], tree_b: list[Edge],
                        trigger: Trigger, *, seed: int,
                        flow_a: int, flow_b: int, window: int = 4,
                        offered_load: tuple[float, float] | None = None,
                        ) -> NcBinding | None:
    """Find the maximal shared partition of two trees and, if the trigger
    predicate fires, bind an ingress/egress coded segment across it."""
    shared_all = set(tree_a) & set(tree_b)
    if not shared_all:
        return None

    graph = nx.Graph()
    graph.add_edges_from(shared_all)
    components = [set(c) for c in nx.connected_components(graph)]
    best_nodes, best_edges = max(
        ((nodes, {e for e in shared_all if e[0] in nodes and e[1] in nodes})
         for nodes in components),
        key=lambda item: len(item[1]))

    entries_a = _entry_nodes(tree_a, best_nodes, best_edges)
    entries_b = _entry_nodes(tree_b, best_nodes, best_edges)
    common_entry = entries_a & entries_b
    if len(entries_a) != 1 or len(entries_b) != 1 or not common_entry:
        return None  # flows enter the partition apart; nothing to merge

    if trigger is Trigger.FALSE_POSITIVE_RATE:
        fired = (fp_estimate(len(tree_a)) > FP_TRIGGER_THRESHOLD
                 or fp_estimate(len(tree_b)) > FP_TRIGGER_THRESHOLD)
    elif trigger is Trigger.CONGESTION:
        if offered_load is None or topology is None:
            fired = False
        else:
            load = sum(offered_load)
            fired = any(
                topology.get(e) is not None and load > CONGESTION_TRIGGER_UTILIZATION * topology[e]
                for e in best_edges)
    else:
        fired = True  # resilience: operator-forced
    if not fired:
        return None

    ingress = next(iter(common_entry))
    egress = sorted(_exit_nodes(tree_a, best_nodes, best_edges)
                    | _exit_nodes(tree_b, best_nodes, best_edges))
    a_only = tuple(sorted(set(tree_a) - best_edges))
    b_only = tuple(sorted(set(tree_b) - best_edges))
    shared = tuple(sorted(best_edges))
    return NcBinding(
        parent_a=flow_a, parent_b=flow_b,
        derived=derive_flow_id(flow_a, flow_b), k=window,
        ingress=ingress, egress=tuple(egress),
        shared_edges=shared, a_only_edges=a_only, b_only_edges=b_only,
        filter_a_only=build_zfilter(a_only, seed),
        filter_b_only=build_zfilter(b_only, seed),
        filter_coded=build_zfilter(shared, seed),
    )


# --- border-node coding ---------------------------------------------------------


def nc_ingress(window_a: list[FlowPacket], window_b: list[FlowPacket],
               binding: NcBinding, rng: random.Random,
               gen_seq: int) -> list[CodedFlowPacket]:
    """Encode one generation: k packets of each parent flow into 2k
    full-rank combinations tagged with the derived flow."""
    if not window_a or not window_b:
        raise ValueError("binding requires two flows with packets to merge")
    k = binding.k
    if len(window_a) > k or len(window_b) > k:
        raise ValueError(f"windows must hold at most {k} packets each")

    def padded(window: list[FlowPacket]) -> list[bytes]:
        # Underfull windows at stream end are flushed with empty sources.
        return [p.payload for p in window] + [b""] * (k - len(window))

    sources = padded(window_a) + padded(window_b)
    lengths = tuple(len(s) for s in sources)
    chunk_size = max(lengths) if max(lengths) > 0 else 1
    gen = Generation.from_chunks(gen_seq, sources, chunk_size=chunk_size)

    tracker = DecoderState(gen_id=gen_seq, k=2 * k, chunk_size=chunk_size)
    out: list[CodedFlowPacket] = []
    while len(out) < 2 * k:
        chunk = rlnc.encode_random(gen, rng)
        if not tracker.add_chunk(chunk):
            continue  # dependent draw: redraw so the batch spans full rank
        out.append(CodedFlowPacket(
            flow_id=binding.derived, zfilter=binding.filter_coded,
            gen_seq=gen_seq, k=k, vector=chunk.vector,
            parent_a=binding.parent_a, parent_b=binding.parent_b,
            parent_filter_a=binding.filter_a_only,
            parent_filter_b=binding.filter_b_only,
            lengths=lengths, payload=chunk.payload))
    return out


def nc_egress(packets: list[CodedFlowPacket],
              binding: NcBinding) -> tuple[list[FlowPacket], list[FlowPacket]]:
    """Decode a generation and restore both parent flows byte-exact,
    re-tagged with their own identifiers and forwarding filters."""
    if not packets:
        raise ValueError("nothing to decode")
    first = packets[0]
    k = first.k
    state = DecoderState(gen_id=first.gen_seq, k=2 * k,
                         chunk_size=len(first.payload))
    for p in packets:
        state.add_chunk(CodedChunk(gen_id=first.gen_seq, vector=p.vector,
                                   payload=p.payload))
        if state.decodable:
            break
    sources = state.decode()  # raises InsufficientRankError when under-ranked

    def restore(flow_id: int, zfilter: int, offset: int) -> list[FlowPacket]:
        out = []
        for i in range(k):
            length = first.lengths[offset + i]
            if length == 0:
                continue  # flush padding, not a real packet
            out.append(FlowPacket(flow_id=flow_id, zfilter=zfilter,
                                  seq=first.gen_seq * k + i,
                                  payload=sources[offset + i][:length]))
        return out

    return (restore(first.parent_a, first.parent_filter_a, 0),
            restore(first.parent_b, first.parent_filter_b, k))
