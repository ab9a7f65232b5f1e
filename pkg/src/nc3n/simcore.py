"""Deterministic discrete-event engine: links with latency, serialization
and loss; per-node handlers; metrics and packet traces.

Events are dispatched in (time, sequence) order, so identical
(scenario, seed) pairs replay byte-identically.  All randomness flows
from named child generators of the run seed.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from .ccn import DataPacket, Interest


class InternalError(Exception):
    """An engine invariant was violated (bug guard, maps to exit code 3)."""


@dataclass
class Link:
    key: str
    a: str
    b: str
    latency: float
    capacity: float | None = None  # chunks per second; None = no serialization
    loss: float = 0.0
    scripted_drops: dict[str, frozenset[int]] = field(default_factory=dict)
    busy_until: dict[str, float] = field(default_factory=dict)
    sent: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.latency <= 0:
            raise ValueError("link latency must be positive")
        if self.capacity is not None and self.capacity <= 0:
            raise ValueError("link capacity must be positive")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("loss probability must lie in [0, 1]")


def service_units(packet: Any) -> float:
    """Serialization weight in chunk units; Interests are negligible."""
    if isinstance(packet, Interest):
        return 0.0
    return 1.0


def packet_trace_fields(packet: Any) -> tuple[str, str, str, str]:
    """(kind, name, nonce-or-gen, vector-hex) for the trace log."""
    if isinstance(packet, Interest):
        return "INT", str(packet.name), str(packet.nonce), ""
    if isinstance(packet, DataPacket):
        info = packet.signed_info
        if info.is_coded:
            return "DATA", str(packet.name), str(info.gen_id), info.vector.hex()
        return "DATA", str(packet.name), str(info.chunk_number or 0), ""
    return packet.trace_fields()


class Metrics:
    """Per-link and per-consumer counters; JSON with stable key order."""

    def __init__(self):
        self.links: dict[str, dict[str, float]] = {}
        self.consumers: dict[str, dict[str, Any]] = {}
        self.nodes: dict[str, dict[str, int]] = {}
        self.scalars: dict[str, float] = {
            "events_dispatched": 0,
            "end_time": 0.0,
            "false_positive_deliveries": 0,
            "generation_losses": 0,
            "window_flushes": 0,
            "window_stalls": 0,
        }

    def link(self, direction: str) -> dict[str, float]:
        return self.links.setdefault(direction, {
            "tx_packets": 0, "tx_interests": 0, "tx_data": 0,
            "tx_bytes": 0, "losses": 0,
        })

    def consumer(self, node_id: str) -> dict[str, Any]:
        return self.consumers.setdefault(node_id, {
            "addressed": 0, "received": 0, "innovative": 0, "wasted": 0,
            "lost": 0, "complete": False, "completion_time": None,
            "retrieval_times": [], "held_chunks": [], "retransmissions": 0,
        })

    def bump(self, key: str, amount: float = 1) -> None:
        self.scalars[key] = self.scalars.get(key, 0) + amount

    def totals(self) -> dict[str, float]:
        out = {"tx_packets": 0, "tx_interests": 0, "tx_data": 0, "tx_bytes": 0,
               "losses": 0}
        for counters in self.links.values():
            for k in out:
                out[k] += counters[k]
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "links": self.links,
            "link_totals": self.totals(),
            "consumers": self.consumers,
            "nodes": self.nodes,
            **self.scalars,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class Simulator:
    """Single-threaded event loop over a static topology."""

    def __init__(self, seed: int, trace: bool = False):
        self.seed = seed
        self.now = 0.0
        self.metrics = Metrics()
        self.trace_enabled = trace
        self.trace_lines: list[str] = []
        self._queue: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[Any, int], None]] = {}
        self._consumers: set[str] = set()
        self._faces: dict[tuple[str, int], tuple[Link, str, str, int]] = {}
        self._face_count: dict[str, int] = {}
        self._links: list[Link] = []
        self._rng_links = self.rng("links")

    def rng(self, purpose: str) -> random.Random:
        return random.Random(f"{self.seed}:{purpose}")

    # --- topology ---------------------------------------------------------

    def add_node(self, node_id: str, handler: Callable[[Any, int], None],
                 consumer: bool = False) -> None:
        if node_id in self._handlers:
            raise InternalError(f"duplicate node id {node_id}")
        self._handlers[node_id] = handler
        if consumer:
            self._consumers.add(node_id)

    def connect(self, a: str, b: str, latency: float, capacity: float | None = None,
                loss: float = 0.0,
                scripted_drops: dict[str, frozenset[int]] | None = None) -> tuple[int, int]:
        """Bidirectional link; returns the face numbers at a and b."""
        index = sum(1 for l in self._links if {l.a, l.b} == {a, b})
        link = Link(key=f"{a}<->{b}#{index}", a=a, b=b, latency=latency,
                    capacity=capacity, loss=loss,
                    scripted_drops=scripted_drops or {})
        self._links.append(link)
        face_a = self._face_count.get(a, 0)
        face_b = self._face_count.get(b, 0)
        self._face_count[a] = face_a + 1
        self._face_count[b] = face_b + 1
        self._faces[(a, face_a)] = (link, f"{a}->{b}#{index}", b, face_b)
        self._faces[(b, face_b)] = (link, f"{b}->{a}#{index}", a, face_a)
        return face_a, face_b

    # --- event loop ---------------------------------------------------------

    def schedule(self, time: float, fn: Callable[[], None]) -> None:
        if time < self.now - 1e-12:
            raise InternalError(f"event scheduled in the past: {time} < {self.now}")
        heapq.heappush(self._queue, (time, self._seq, fn))
        self._seq += 1

    def run(self, until: float | None = None) -> Metrics:
        while self._queue:
            time, _, fn = self._queue[0]
            if until is not None and time > until:
                break
            heapq.heappop(self._queue)
            if time < self.now - 1e-12:
                raise InternalError("event queue went backwards")
            self.now = max(self.now, time)
            self.metrics.bump("events_dispatched")
            fn()
        if until is not None:
            self.now = max(self.now, until)
        self.metrics.scalars["end_time"] = self.now
        return self.metrics

    # --- transmission ---------------------------------------------------------

    def transmit(self, src: str, face: int, packet: Any) -> None:
        try:
            link, direction, dst, dst_face = self._faces[(src, face)]
        except KeyError:
            raise InternalError(f"no face {face} at node {src}") from None
        counters = self.metrics.link(direction)
        counters["tx_packets"] += 1
        kind = packet_trace_fields(packet)[0]
        counters["tx_interests" if kind == "INT" else "tx_data"] += 1
        counters["tx_bytes"] += getattr(packet, "wire_size", 0)

        is_data = kind == "DATA"
        if is_data and dst in self._consumers:
            self.metrics.consumer(dst)["addressed"] += 1

        ordinal = link.sent.get(direction, 0) + 1
        link.sent[direction] = ordinal
        dropped = ordinal in link.scripted_drops.get(direction, frozenset())
        if not dropped and link.loss > 0.0:
            dropped = self._rng_links.random() < link.loss
        if dropped:
            counters["losses"] += 1
            if is_data and dst in self._consumers:
                self.metrics.consumer(dst)["lost"] += 1
            return

        depart = max(self.now, link.busy_until.get(direction, 0.0))
        if link.capacity is not None:
            depart += service_units(packet) / link.capacity
        link.busy_until[direction] = depart
        arrival = depart + link.latency

        def deliver():
            if self.trace_enabled:
                kind, name, ref, vec = packet_trace_fields(packet)
                self.trace_lines.append(
                    f"{self.now:.9f}\t{dst}\t{kind}\t{dst_face}\t{name}\t{ref}\t{vec}")
            self._handlers[dst](packet, dst_face)

        self.schedule(arrival, deliver)

    def trace_text(self) -> str:
        return "\n".join(self.trace_lines) + ("\n" if self.trace_lines else "")
