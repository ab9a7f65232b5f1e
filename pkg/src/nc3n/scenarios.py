"""Canonical desk-scale scenarios: multipath loss recovery, two-interface
bandwidth waste, in-network coded caching, rate additivity over unequal
interfaces, and Bloom-filter forwarding with a coded subgraph.

Every scenario runs as one or two arms ("nc_off", "nc_on") over the
deterministic engine; identical (scenario, seed) pairs reproduce
byte-identical traces and metrics.
"""

from __future__ import annotations

import dataclasses
import hashlib
import random
from collections import deque
from dataclasses import dataclass, field

from . import bloomfwd, rlnc
from .bloomfwd import CodedFlowPacket, FlowPacket, Trigger
from .ccn import ContentName, DataPacket, Interest, Selector, SignedInfo
from .ncproto import make_nc_interest
from .node import Node, NodeConfig, RepoObject, derive_gen_id_base
from .node import (BroadcastInterest, ForwardData, ForwardInterest, ReplyFromStore)
from .rlnc import CodedChunk, DecoderState, Generation
from .simcore import InternalError, Simulator

ARM_OFF = "nc_off"
ARM_ON = "nc_on"


class ConfigError(ValueError):
    """Bad scenario kind or parameters (CLI exit code 2)."""


@dataclass
class ArmResult:
    arm: str
    metrics: dict
    trace: list[str]
    extras: dict


@dataclass
class ScenarioResult:
    scenario: str
    seed: int
    arms: dict[str, ArmResult]


# --- wiring helpers -----------------------------------------------------------


def attach_ccn_node(sim: Simulator, node: Node) -> None:
    """Register a forwarding node; its actions become transmissions."""

    def execute(actions):
        for act in actions:
            if isinstance(act, ReplyFromStore):
                sim.transmit(node.id, act.face, act.data)
            elif isinstance(act, (ForwardInterest, BroadcastInterest)):
                for f in act.faces:
                    sim.transmit(node.id, f, act.interest)
            elif isinstance(act, ForwardData):
                for f in act.faces:
                    sim.transmit(node.id, f, act.data)

    def handler(packet, face):
        if isinstance(packet, Interest):
            execute(node.handle_interest(packet, face, sim.now))
        elif isinstance(packet, DataPacket):
            execute(node.handle_data(packet, face, sim.now))
        else:
            raise InternalError(f"unexpected packet at {node.id}: {packet!r}")

    sim.add_node(node.id, handler)


def link_ccn(sim: Simulator, a: Node | str, b: Node | str, **kwargs) -> tuple[int, int]:
    ida = a if isinstance(a, str) else a.id
    idb = b if isinstance(b, str) else b.id
    fa, fb = sim.connect(ida, idb, **kwargs)
    if isinstance(a, Node):
        a.attach_face(fa)
    if isinstance(b, Node):
        b.attach_face(fb)
    return fa, fb


@dataclass
class ObjectSpec:
    """What a consumer knows about an object up front (catalog metadata)."""

    name: ContentName
    total_chunks: int
    k: int
    chunk_size: int
    gen_ids: list[int] = field(init=False)

    def __post_init__(self):
        base = derive_gen_id_base(self.name.object_key)
        count = (self.total_chunks + self.k - 1) // self.k
        self.gen_ids = [base + i for i in range(count)]

    def gen_k(self, index: int) -> int:
        return min(self.k, self.total_chunks - index * self.k)


@dataclass
class _Slot:
    nonce: int
    issued: float
    retries: int = 0


class Consumer:
    """Interest-driven consumer over one or more faces.

    Policies: "rounds" re-requests the lowest missing chunk on every
    face each round (the two-interface pattern); "split" statically
    partitions chunk numbers across faces; NC mode pipelines coded
    Interests carrying the current DoF digest.
    """

    def __init__(self, sim: Simulator, node_id: str, obj: ObjectSpec, *,
                 nc: bool, window: int = 1, rounds: int | None = None,
                 face_chunks: dict[int, list[int]] | None = None,
                 max_retries: int = 16, init_rto: float = 1.0):
        self.sim = sim
        self.id = node_id
        self.obj = obj
        self.nc = nc
        self.window = window
        self.rounds = rounds
        self.max_retries = max_retries
        self.init_rto = init_rto
        self.rng = sim.rng(f"consumer:{node_id}")
        self.faces: list[int] = []
        self.outstanding: dict[int, deque[_Slot]] = {}
        self.issued_per_face: dict[int, int] = {}
        self.rtt: dict[int, float | None] = {}
        self.held: dict[int, bytes] = {}
        self.states: dict[int, DecoderState] = {}
        self.decoded_gens: set[int] = set()
        self.round_no = 0
        self.complete = False
        self.face_queue: dict[int, deque[int]] = {}
        if face_chunks:
            self.policy = "split"
        elif nc:
            self.policy = "nc"
        else:
            self.policy = "rounds"
        self._face_chunks = face_chunks or {}
        sim.add_node(node_id, self.handle, consumer=True)
        sim.metrics.consumer(node_id)

    def attach_face(self, face: int) -> None:
        self.faces.append(face)
        self.outstanding[face] = deque()
        self.issued_per_face[face] = 0
        self.rtt[face] = None
        self.face_queue[face] = deque(self._face_chunks.get(face, []))

    def start(self) -> None:
        self.sim.schedule(0.0, self._kickoff)

    # --- issuing ---------------------------------------------------------

    def _kickoff(self) -> None:
        if self.policy == "rounds":
            self._begin_round()
        else:
            for face in self.faces:
                self._fill(face)

    def _rto(self, face: int) -> float:
        est = self.rtt[face]
        return 2.0 * est if est is not None else self.init_rto

    def _issue(self, face: int, interest: Interest) -> None:
        slot = _Slot(nonce=interest.nonce, issued=self.sim.now)
        self.outstanding[face].append(slot)
        self.issued_per_face[face] += 1
        self.sim.transmit(self.id, face, interest)
        self.sim.schedule(self.sim.now + self._rto(face),
                          lambda: self._timeout(face, slot, interest))

    def _plain_interest(self, chunk: int) -> Interest:
        # The very first chunk travels as a bare-prefix (implicit) request.
        name = self.obj.name.bare() if chunk == 1 else self.obj.name.with_chunk(chunk)
        return Interest(name=name, selector=Selector(), nonce=self.rng.getrandbits(64))

    def _nc_interest(self) -> Interest | None:
        gen_index = next((i for i, g in enumerate(self.obj.gen_ids)
                          if g not in self.decoded_gens), None)
        if gen_index is None:
            return None
        state = self._state_for(self.obj.gen_ids[gen_index], gen_index)
        return make_nc_interest(self.obj.name, state, self.rng.getrandbits(64))

    def _fill(self, face: int) -> None:
        if self.complete:
            return
        while len(self.outstanding[face]) < self.window:
            if self.rounds is not None and self.issued_per_face[face] >= self.rounds:
                return
            if self.policy == "nc":
                interest = self._nc_interest()
                if interest is None:
                    return
            else:  # split
                if not self.face_queue[face]:
                    return
                interest = self._plain_interest(self.face_queue[face].popleft())
            self._issue(face, interest)

    def _begin_round(self) -> None:
        if self.complete:
            return
        if self.rounds is not None and self.round_no >= self.rounds:
            return
        self.round_no += 1
        missing = next(n for n in range(1, self.obj.total_chunks + 1)
                       if n not in self.held)
        for face in self.faces:
            self._issue(face, self._plain_interest(missing))

    def _timeout(self, face: int, slot: _Slot, interest: Interest) -> None:
        if slot not in self.outstanding[face] or self.complete:
            return
        self.outstanding[face].remove(slot)
        if slot.retries >= self.max_retries:
            return
        self.sim.metrics.consumer(self.id)["retransmissions"] += 1
        if self.nc:
            fresh = self._nc_interest()
        else:
            fresh = dataclasses.replace(interest, nonce=self.rng.getrandbits(64))
        if fresh is None:
            return
        new_slot = _Slot(nonce=fresh.nonce, issued=self.sim.now,
                         retries=slot.retries + 1)
        self.outstanding[face].append(new_slot)
        self.sim.transmit(self.id, face, fresh)
        self.sim.schedule(self.sim.now + self._rto(face),
                          lambda: self._timeout(face, new_slot, fresh))

    # --- receiving ---------------------------------------------------------

    def _state_for(self, gen_id: int, gen_index: int) -> DecoderState:
        state = self.states.get(gen_id)
        if state is None:
            state = DecoderState(gen_id=gen_id, k=self.obj.gen_k(gen_index),
                                 chunk_size=self.obj.chunk_size)
            self.states[gen_id] = state
        return state

    def handle(self, packet, face: int) -> None:
        if not isinstance(packet, DataPacket):
            return
        m = self.sim.metrics.consumer(self.id)
        m["received"] += 1
        if self.outstanding[face]:
            slot = self.outstanding[face].popleft()
            sample = self.sim.now - slot.issued
            m["retrieval_times"].append(round(sample, 9))
            prev = self.rtt[face]
            self.rtt[face] = sample if prev is None else 0.7 * prev + 0.3 * sample

        info = packet.signed_info
        if info.is_coded:
            self._absorb_coded(info, packet.payload, m)
        else:
            self._absorb_plain(info.chunk_number, packet.payload, m)

        if self.policy == "rounds":
            if not any(self.outstanding.values()) and not self.complete:
                self._begin_round()
        else:
            self._fill(face)

    def _absorb_plain(self, n: int | None, payload: bytes, m: dict) -> None:
        if n is None or not 1 <= n <= self.obj.total_chunks or n in self.held:
            m["wasted"] += 1
            return
        self.held[n] = payload
        m["innovative"] += 1
        m["held_chunks"] = sorted(self.held)
        if len(self.held) == self.obj.total_chunks:
            self._finish()

    def _absorb_coded(self, info, payload: bytes, m: dict) -> None:
        if info.gen_id not in self.obj.gen_ids:
            m["wasted"] += 1
            return
        gen_index = self.obj.gen_ids.index(info.gen_id)
        state = self._state_for(info.gen_id, gen_index)
        chunk = CodedChunk(gen_id=info.gen_id, vector=info.vector, payload=payload)
        if state.add_chunk(chunk):
            m["innovative"] += 1
        else:
            m["wasted"] += 1
            return
        if state.decodable and info.gen_id not in self.decoded_gens:
            self.decoded_gens.add(info.gen_id)
            base = gen_index * self.obj.k
            for offset, source in enumerate(state.decode()):
                self.held[base + offset + 1] = source
            m["held_chunks"] = sorted(self.held)
            if len(self.decoded_gens) == len(self.obj.gen_ids):
                self._finish()

    def _finish(self) -> None:
        if self.complete:
            return
        self.complete = True
        m = self.sim.metrics.consumer(self.id)
        m["complete"] = True
        m["completion_time"] = round(self.sim.now, 9)

    def object_bytes(self) -> bytes:
        return b"".join(self.held[n] for n in sorted(self.held))


# --- scenario: Figure 1 multipath push ---------------------------------------


FIG1_DEFAULTS = {"chunks": 3, "chunk_size": 32, "latency": 0.01}


def _run_fig1(params: dict, seed: int, nc: bool, trace: bool) -> ArmResult:
    p = _merged(FIG1_DEFAULTS, params)
    arm = ARM_ON if nc else ARM_OFF
    sim = Simulator(seed=f"{seed}:{arm}", trace=trace)
    total, size = p["chunks"], p["chunk_size"]

    payload = random.Random(f"{seed}:object").randbytes(total * size)
    chunks = [payload[i * size:(i + 1) * size] for i in range(total)]
    name = ContentName.parse("www.foo.com/Dir/File")
    gen = Generation.from_chunks(derive_gen_id_base(name.object_key) + 1,
                                 chunks, chunk_size=size)

    collector_state = DecoderState(gen_id=gen.gen_id, k=total, chunk_size=size)
    held: dict[int, bytes] = {}

    def collect(packet, face):
        m = sim.metrics.consumer("D")
        m["received"] += 1
        info = packet.signed_info
        if info.is_coded:
            if collector_state.add_chunk(CodedChunk(info.gen_id, info.vector,
                                                    packet.payload)):
                m["innovative"] += 1
            else:
                m["wasted"] += 1
            if collector_state.decodable and not m["complete"]:
                for i, source in enumerate(collector_state.decode()):
                    held[i + 1] = source
                m["complete"] = True
                m["completion_time"] = round(sim.now, 9)
        else:
            n = info.chunk_number
            if n in held:
                m["wasted"] += 1
            else:
                held[n] = packet.payload
                m["innovative"] += 1
                if len(held) == total:
                    m["complete"] = True
                    m["completion_time"] = round(sim.now, 9)
        m["held_chunks"] = sorted(held)

    sim.add_node("S", lambda packet, face: None)
    sim.add_node("D", collect, consumer=True)
    sim.metrics.consumer("D")

    faces = []
    for path in range(2):
        fa, _ = sim.connect("S", "D", latency=p["latency"],
                            scripted_drops={f"S->D#{path}": frozenset({1})})
        faces.append(fa)

    rng = sim.rng("source")

    def push():
        for fa in faces:
            for n in range(1, total + 1):
                if nc:
                    coded = rlnc.encode_random(gen, rng)
                    info = SignedInfo(gen_id=gen.gen_id, k=total,
                                              vector=coded.vector, first_chunk=1,
                                              total_chunks=total)
                    packet = DataPacket(name=name.with_nc(), signed_info=info,
                                        payload=coded.payload)
                else:
                    packet = DataPacket(name=name.with_chunk(n),
                                        signed_info=SignedInfo(
                                            chunk_number=n, total_chunks=total),
                                        payload=chunks[n - 1])
                sim.transmit("S", fa, packet)

    sim.schedule(0.0, push)
    metrics = sim.run()
    delivered = b"".join(held[n] for n in sorted(held))
    extras = {"object_ok": delivered == payload if len(held) == total else False,
              "rank": collector_state.rank if nc else None}
    return ArmResult(arm=arm, metrics=metrics.to_dict(), trace=sim.trace_lines,
                     extras=extras)


# --- scenario: two-interface multipath retrieval ------------------------------


MULTIPATH_DEFAULTS = {"total_chunks": 2, "chunk_size": 64, "latency": 0.01,
                      "rounds": 1, "loss": 0.0, "capacity": None}


def _build_object(seed: int, name: str, total: int, k: int, size: int) -> RepoObject:
    payload = random.Random(f"{seed}:object").randbytes(total * size)
    return RepoObject.build(name, payload, k=k, chunk_size=size)


def _run_multipath(params: dict, seed: int, nc: bool, trace: bool) -> ArmResult:
    p = _merged(MULTIPATH_DEFAULTS, params)
    arm = ARM_ON if nc else ARM_OFF
    sim = Simulator(seed=f"{seed}:{arm}", trace=trace)
    total, size = p["total_chunks"], p["chunk_size"]
    obj = _build_object(seed, "www.foo.com/Dir/File", total, total, size)

    repos = []
    for rid in ("P1", "P2"):
        repo = Node(rid, NodeConfig(), rng=sim.rng(f"node:{rid}"))
        repo.add_repo_object(obj)
        attach_ccn_node(sim, repo)
        repos.append(repo)

    spec = ObjectSpec(name=obj.name, total_chunks=total, k=total, chunk_size=size)
    consumer = Consumer(sim, "N", spec, nc=nc, window=1, rounds=p["rounds"])
    for repo in repos:
        fa, _ = link_ccn(sim, "N", repo, latency=p["latency"],
                         capacity=p["capacity"], loss=p["loss"])
        consumer.attach_face(fa)
    consumer.start()
    metrics = sim.run()

    m = metrics.consumer("N")
    ratio = m["innovative"] / m["received"] if m["received"] else 0.0
    extras = {"useful_ratio": ratio,
              "object_ok": consumer.complete and consumer.object_bytes() == b"".join(obj.chunks),
              "nodes": {r.id: r.counters.as_dict() for r in repos}}
    metrics.nodes.update({r.id: r.counters.as_dict() for r in repos})
    return ArmResult(arm=arm, metrics=metrics.to_dict(), trace=sim.trace_lines,
                     extras=extras)


# --- scenario: in-network coded caching (line topology) -----------------------


CACHING_DEFAULTS = {"total_chunks": 2, "chunk_size": 64,
                    "lat_consumer_router": 0.01, "lat_router_repo": 0.02}


def _run_caching_delay(params: dict, seed: int, nc: bool, trace: bool) -> ArmResult:
    p = _merged(CACHING_DEFAULTS, params)
    arm = ARM_ON if nc else ARM_OFF
    sim = Simulator(seed=f"{seed}:{arm}", trace=trace)
    total, size = p["total_chunks"], p["chunk_size"]
    obj = _build_object(seed, "www.foo.com/Dir/File", total, total, size)

    router = Node("R", NodeConfig(), rng=sim.rng("node:R"))
    attach_ccn_node(sim, router)
    repos = []
    for rid in ("P1", "P2"):
        repo = Node(rid, NodeConfig(), rng=sim.rng(f"node:{rid}"))
        repo.add_repo_object(obj)
        attach_ccn_node(sim, repo)
        repos.append(repo)

    spec = ObjectSpec(name=obj.name, total_chunks=total, k=total, chunk_size=size)
    if nc:
        consumer = Consumer(sim, "N", spec, nc=True, window=1)
    else:
        consumer = Consumer(sim, "N", spec, nc=False, window=1,
                            face_chunks={0: list(range(1, total + 1))})
    fa, _ = link_ccn(sim, "N", router, latency=p["lat_consumer_router"])
    consumer.attach_face(fa)
    for repo in repos:
        link_ccn(sim, router, repo, latency=p["lat_router_repo"])
    consumer.start()
    metrics = sim.run()

    metrics.nodes["R"] = router.counters.as_dict()
    extras = {
        "object_ok": consumer.complete and consumer.object_bytes() == b"".join(obj.chunks),
        "retrieval_times": metrics.consumer("N")["retrieval_times"],
        "router": router.counters.as_dict(),
    }
    return ArmResult(arm=arm, metrics=metrics.to_dict(), trace=sim.trace_lines,
                     extras=extras)


# --- scenario: rate additivity over unequal interfaces -------------------------


RATE_DEFAULTS = {"k": 40, "chunk_size": 64, "capacity_fast": 30.0,
                 "capacity_slow": 10.0, "latency": 0.001, "window": 12}


def _run_rate_additivity(params: dict, seed: int, nc: bool, trace: bool) -> ArmResult:
    p = _merged(RATE_DEFAULTS, params)
    arm = ARM_ON if nc else ARM_OFF
    sim = Simulator(seed=f"{seed}:{arm}", trace=trace)
    k, size = p["k"], p["chunk_size"]
    obj = _build_object(seed, "www.foo.com/Dir/Video", k, k, size)

    repos = []
    for rid in ("P1", "P2"):
        repo = Node(rid, NodeConfig(), rng=sim.rng(f"node:{rid}"))
        repo.add_repo_object(obj)
        attach_ccn_node(sim, repo)
        repos.append(repo)

    spec = ObjectSpec(name=obj.name, total_chunks=k, k=k, chunk_size=size)
    if nc:
        consumer = Consumer(sim, "N", spec, nc=True, window=p["window"])
    else:
        half = k // 2
        consumer = Consumer(sim, "N", spec, nc=False, window=p["window"],
                            face_chunks={0: list(range(1, half + 1)),
                                         1: list(range(half + 1, k + 1))})
    for repo, cap in zip(repos, (p["capacity_fast"], p["capacity_slow"])):
        fa, _ = link_ccn(sim, "N", repo, latency=p["latency"], capacity=cap)
        consumer.attach_face(fa)
    consumer.start()
    metrics = sim.run()

    ideal = k / (p["capacity_fast"] + p["capacity_slow"])
    extras = {"ideal_time": ideal,
              "completion_time": metrics.consumer("N")["completion_time"],
              "object_ok": consumer.complete and consumer.object_bytes() == b"".join(obj.chunks)}
    return ArmResult(arm=arm, metrics=metrics.to_dict(), trace=sim.trace_lines,
                     extras=extras)


# --- scenario: Bloom-filter forwarding with a coded subgraph -------------------


BLOOM_DEFAULTS = {"packets_per_flow": 100, "window": 4, "latency": 0.001,
                  "send_interval": 0.01, "trigger": "false_positive_rate",
                  "filter_seed": 1}


def _chain(names: list[str]) -> list[tuple[str, str]]:
    return [(names[i], names[i + 1]) for i in range(len(names) - 1)]


def _fig3_topology() -> dict:
    spine = ["in"] + [f"s{i}" for i in range(1, 12)] + ["eg"]
    shared = _chain(spine)
    branch_a = _chain(["s4"] + [f"t{i}" for i in range(1, 7)])
    tail_a = _chain(["eg"] + [f"u{i}" for i in range(1, 9)])
    branch_b = _chain(["s8"] + [f"r{i}" for i in range(1, 6)])
    tail_b = _chain(["eg"] + [f"w{i}" for i in range(1, 8)])
    tree_a = [("pa", "in")] + shared + branch_a + tail_a
    tree_b = [("pb", "in")] + shared + branch_b + tail_b

    strays: list[tuple[str, str]] = []
    for n in spine:
        strays += [(n, f"{n}x0"), (n, f"{n}x1")]
    for branch in (branch_a, tail_a, branch_b, tail_b):
        for u, _ in branch[1:]:
            strays.append((u, f"{u}x0"))
    links = sorted({tuple(sorted(e)) for e in tree_a + tree_b + strays})
    return {
        "tree_a": tree_a, "tree_b": tree_b, "links": links,
        "subscribers": {"A": ["t6", "u8"], "B": ["r5", "w7"]},
        "publishers": {"A": "pa", "B": "pb"},
    }


class _BloomNet:
    """Executes zFilter forwarding over the engine, with optional
    NC-enabled ingress/egress border nodes."""

    def __init__(self, sim: Simulator, topo: dict, seed: int, latency: float,
                 binding: bloomfwd.NcBinding | None):
        self.sim = sim
        self.topo = topo
        self.filter_seed = seed
        self.latency = latency
        self.binding = binding
        self.rng = sim.rng("ingress")
        self.faces: dict[str, dict[str, int]] = {}
        self.face_peer: dict[tuple[str, int], str] = {}
        self.filter_edges: dict[int, set[tuple[str, str]]] = {}
        self.delivered: dict[str, dict[tuple[int, int], bytes]] = {}
        self.sub_of: dict[int, list[str]] = {}
        self.window_a: list[FlowPacket] = []
        self.window_b: list[FlowPacket] = []
        self.gen_seq = 0
        self.egress_states: dict[tuple[str, int], DecoderState | None] = {}
        self.egress_meta: dict[tuple[str, int], CodedFlowPacket] = {}

        nodes = sorted({n for e in topo["links"] for n in e})
        for n in nodes:
            self.sim.add_node(n, self._handler(n))
        for a, b in topo["links"]:
            fa, fb = sim.connect(a, b, latency=latency)
            self.faces.setdefault(a, {})[b] = fa
            self.faces.setdefault(b, {})[a] = fb
            self.face_peer[(a, fa)] = b
            self.face_peer[(b, fb)] = a

    def register_filter(self, zfilter: int, edges) -> None:
        self.filter_edges.setdefault(zfilter, set()).update(edges)

    def register_subscribers(self, flow_id: int, nodes: list[str]) -> None:
        self.sub_of[flow_id] = list(nodes)
        for n in nodes:
            self.delivered.setdefault(n, {})

    def send(self, node: str, packet) -> None:
        self._forward(node, packet)

    def delivered_payloads(self) -> dict[str, list[bytes]]:
        return {sub: sorted(got.values()) for sub, got in self.delivered.items()}

    # --- forwarding -------------------------------------------------------

    def _handler(self, node: str):
        def handle(packet, face):
            self._process(node, packet, face)
        return handle

    def _deliver(self, node: str, flow_id: int, seq: int, payload: bytes) -> None:
        if node in self.sub_of.get(flow_id, ()):
            # Keyed by sequence: forwarding-loop duplicates are a transport
            # artifact, the subscriber application sees each packet once.
            self.delivered[node].setdefault((flow_id, seq), payload)

    def _process(self, node: str, packet, in_face: int | None) -> None:
        binding = self.binding
        if binding is not None and isinstance(packet, CodedFlowPacket):
            if node in binding.egress:
                self._egress_absorb(node, packet)
        if binding is not None and isinstance(packet, FlowPacket) \
                and node == binding.ingress \
                and packet.flow_id in (binding.parent_a, binding.parent_b):
            self._ingress_buffer(packet)
            return  # consumed into the coded flow
        if isinstance(packet, FlowPacket):
            self._deliver(node, packet.flow_id, packet.seq, packet.payload)
        self._forward(node, packet, in_face)

    def _forward(self, node: str, packet, in_face: int | None = None) -> None:
        if packet.ttl <= 0:
            return
        hop = dataclasses.replace(packet, ttl=packet.ttl - 1)
        intended = self.filter_edges.get(packet.zfilter, set())
        arrived_from = self.face_peer.get((node, in_face)) if in_face is not None else None
        for nbr, face in sorted(self.faces.get(node, {}).items()):
            if nbr == arrived_from:
                continue  # never bounce a packet back on its arrival interface
            edge = (node, nbr)
            if not bloomfwd.forward_match(packet.zfilter,
                                          bloomfwd.link_id(edge, self.filter_seed)):
                continue
            if edge not in intended:
                self.sim.metrics.bump("false_positive_deliveries")
                link = self.sim.metrics.link(f"{node}->{nbr}#0")
                link["fp_deliveries"] = link.get("fp_deliveries", 0) + 1
            self.sim.transmit(node, face, hop)

    # --- NC border roles -----------------------------------------------------

    def _ingress_buffer(self, packet: FlowPacket) -> None:
        binding = self.binding
        window = self.window_a if packet.flow_id == binding.parent_a else self.window_b
        window.append(packet)
        k = binding.k
        if len(self.window_a) >= k and len(self.window_b) >= k:
            batch_a = [self.window_a.pop(0) for _ in range(k)]
            batch_b = [self.window_b.pop(0) for _ in range(k)]
            coded = bloomfwd.nc_ingress(batch_a, batch_b, binding, self.rng,
                                        gen_seq=self.gen_seq)
            self.gen_seq += 1
            for cp in coded:
                self._forward(binding.ingress, cp)
        elif len(self.window_a) >= k or len(self.window_b) >= k:
            self.sim.metrics.bump("window_stalls")

    def flush(self) -> None:
        """Pad-and-flush leftover window contents at stream end."""
        binding = self.binding
        if binding is None or not (self.window_a or self.window_b):
            return
        if not self.window_a or not self.window_b:
            return  # one flow never produced a pair; nothing to merge
        self.sim.metrics.bump("window_flushes")
        coded = bloomfwd.nc_ingress(self.window_a, self.window_b, binding,
                                    self.rng, gen_seq=self.gen_seq)
        self.gen_seq += 1
        self.window_a, self.window_b = [], []
        for cp in coded:
            self._forward(binding.ingress, cp)

    def _egress_absorb(self, node: str, packet: CodedFlowPacket) -> None:
        key = (node, packet.gen_seq)
        if key in self.egress_states and self.egress_states[key] is None:
            return  # generation already decoded or dropped here
        state = self.egress_states.get(key)
        if state is None:
            state = DecoderState(gen_id=packet.gen_seq, k=2 * packet.k,
                                 chunk_size=len(packet.payload))
            self.egress_states[key] = state
            self.egress_meta[key] = packet
            timeout = self.sim.now + 10 * self.latency
            self.sim.schedule(timeout, lambda: self._egress_timeout(key))
        state.add_chunk(CodedChunk(gen_id=packet.gen_seq, vector=packet.vector,
                                   payload=packet.payload))
        if state.decodable:
            self._egress_emit(node, key, state)

    def _egress_emit(self, node: str, key, state: DecoderState) -> None:
        meta = self.egress_meta[key]
        sources = state.decode()
        self.egress_states[key] = None
        k = meta.k
        for flow_id, zfilter, offset in (
                (meta.parent_a, meta.parent_filter_a, 0),
                (meta.parent_b, meta.parent_filter_b, k)):
            for i in range(k):
                length = meta.lengths[offset + i]
                if length == 0:
                    continue
                restored = FlowPacket(flow_id=flow_id, zfilter=zfilter,
                                      seq=meta.gen_seq * k + i,
                                      payload=sources[offset + i][:length])
                for sub in self.sub_of.get(flow_id, ()):
                    if sub == node:
                        self.delivered[node].append(restored.payload)
                self._forward(node, restored)

    def _egress_timeout(self, key) -> None:
        state = self.egress_states.get(key)
        if state is not None:
            self.egress_states[key] = None
            self.sim.metrics.bump("generation_losses")


def _run_bloom(params: dict, seed: int, nc: bool, trace: bool) -> ArmResult:
    p = _merged(BLOOM_DEFAULTS, params)
    arm = ARM_ON if nc else ARM_OFF
    sim = Simulator(seed=f"{seed}:{arm}", trace=trace)
    topo = _fig3_topology()
    fseed = p["filter_seed"]

    flow_a = bloomfwd.new_flow_id("A", fseed)
    flow_b = bloomfwd.new_flow_id("B", fseed)
    binding = None
    if nc:
        binding = bloomfwd.plan_coded_subgraph(
            None, topo["tree_a"], topo["tree_b"], Trigger(p["trigger"]),
            seed=fseed, flow_a=flow_a, flow_b=flow_b, window=p["window"])
        if binding is None:
            raise ConfigError("coded arm requested but the trigger did not fire")

    net = _BloomNet(sim, topo, fseed, p["latency"], binding)
    net.register_subscribers(flow_a, topo["subscribers"]["A"])
    net.register_subscribers(flow_b, topo["subscribers"]["B"])

    if binding is None:
        filter_a = bloomfwd.build_zfilter(topo["tree_a"], fseed)
        filter_b = bloomfwd.build_zfilter(topo["tree_b"], fseed)
        net.register_filter(filter_a, topo["tree_a"])
        net.register_filter(filter_b, topo["tree_b"])
    else:
        filter_a, filter_b = binding.filter_a_only, binding.filter_b_only
        net.register_filter(binding.filter_a_only, binding.a_only_edges)
        net.register_filter(binding.filter_b_only, binding.b_only_edges)
        net.register_filter(binding.filter_coded, binding.shared_edges)

    count, interval = p["packets_per_flow"], p["send_interval"]
    rng_payload = random.Random(f"{seed}:payload")
    fillers = [rng_payload.randbytes(8) for _ in range(count)]

    def publish(label, publisher, flow_id, zfilter, offset):
        for i in range(count):
            payload = f"{label}{i:04d}".encode() + fillers[i][: i % 3]
            packet = FlowPacket(flow_id=flow_id, zfilter=zfilter, seq=i,
                                payload=payload)
            sim.schedule(i * interval + offset,
                         lambda n=publisher, pk=packet: net.send(n, pk))

    publish("A", topo["publishers"]["A"], flow_a, filter_a, 0.0)
    publish("B", topo["publishers"]["B"], flow_b, filter_b, interval / 2)
    sim.schedule(count * interval + 1.0, net.flush)
    metrics = sim.run()

    subscribers = {}
    delivered = {}
    for sub, payloads in sorted(net.delivered.items()):
        ordered = sorted(payloads)
        digest = hashlib.sha256(b"\x00".join(ordered)).hexdigest()
        subscribers[sub] = {"count": len(ordered), "sha256": digest}
        delivered[sub] = ordered
    result = metrics.to_dict()
    result["subscribers"] = subscribers
    extras = {"delivered": delivered,
              "binding": binding,
              "tree_sizes": {"a": len(topo["tree_a"]), "b": len(topo["tree_b"])}}
    return ArmResult(arm=arm, metrics=result, trace=sim.trace_lines, extras=extras)


# --- registry -----------------------------------------------------------------


_SCENARIOS = {
    "fig1": (_run_fig1, FIG1_DEFAULTS),
    "multipath": (_run_multipath, MULTIPATH_DEFAULTS),
    "caching_delay": (_run_caching_delay, CACHING_DEFAULTS),
    "rate_additivity": (_run_rate_additivity, RATE_DEFAULTS),
    "bloom_fp": (_run_bloom, BLOOM_DEFAULTS),
}

SCENARIO_KINDS = tuple(sorted(_SCENARIOS))


def _merged(defaults: dict, params: dict) -> dict:
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown parameters: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(params)
    return merged


def run_scenario(kind: str, params: dict | None = None, seed: int = 7, *,
                 compare: bool = False, nc: bool = True,
                 trace: bool = False) -> ScenarioResult:
    """Build the canonical topology for `kind` and run one or both arms."""
    if kind not in _SCENARIOS:
        raise ConfigError(f"unknown scenario kind {kind!r}; "
                          f"expected one of {', '.join(SCENARIO_KINDS)}")
    runner, _ = _SCENARIOS[kind]
    params = params or {}
    arms = {}
    wanted = [False, True] if compare else [nc]
    for arm_nc in wanted:
        result = runner(params, seed, arm_nc, trace)
        arms[result.arm] = result
    return ScenarioResult(scenario=kind, seed=seed, arms=arms)
