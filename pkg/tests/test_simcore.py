"""Event loop determinism, link model, metrics accounting."""

import pytest

from nc3n.ccn import ContentName, DataPacket, Interest, Selector, SignedInfo
from nc3n.simcore import InternalError, Metrics, Simulator


def data_packet(n=1):
    return DataPacket(name=ContentName.parse(f"obj/f/C{n}"),
                      signed_info=SignedInfo(chunk_number=n), payload=b"x" * 8)


def interest_packet(nonce=1):
    return Interest(name=ContentName.parse("obj/f"), selector=Selector(), nonce=nonce)


def sink(log):
    def handler(packet, face):
        log.append((packet, face))
    return handler


def test_empty_schedule_completes_immediately():
    sim = Simulator(seed=1)
    metrics = sim.run()
    assert metrics.scalars["events_dispatched"] == 0
    assert metrics.scalars["end_time"] == 0.0
    assert metrics.links == {} and metrics.consumers == {}


def test_equal_time_events_dispatch_in_scheduling_order():
    sim = Simulator(seed=1)
    order = []
    sim.schedule(1.0, lambda: order.append("first"))
    sim.schedule(1.0, lambda: order.append("second"))
    sim.schedule(0.5, lambda: order.append("early"))
    sim.run()
    assert order == ["early", "first", "second"]


def test_past_event_is_a_bug_guard():
    sim = Simulator(seed=1)
    sim.schedule(1.0, lambda: sim.schedule(0.5, lambda: None))
    with pytest.raises(InternalError):
        sim.run()


def test_zero_loss_arrival_is_deterministic():
    sim = Simulator(seed=1)
    log = []
    sim.add_node("A", sink([]))
    sim.add_node("B", sink(log))
    fa, _ = sim.connect("A", "B", latency=0.25)
    sim.schedule(0.0, lambda: sim.transmit("A", fa, data_packet()))
    sim.run()
    assert len(log) == 1
    assert sim.now == 0.25


def test_certain_loss_never_arrives():
    sim = Simulator(seed=1)
    log = []
    sim.add_node("A", sink([]))
    sim.add_node("B", sink(log))
    fa, _ = sim.connect("A", "B", latency=0.25, loss=1.0)
    for _ in range(20):
        sim.schedule(0.0, lambda: sim.transmit("A", fa, data_packet()))
    metrics = sim.run()
    assert log == []
    assert metrics.link("A->B#0")["losses"] == 20
    assert metrics.link("A->B#0")["tx_packets"] == 20


def test_scripted_loss_drops_exact_ordinals():
    sim = Simulator(seed=1)
    log = []
    sim.add_node("A", sink([]))
    sim.add_node("B", sink(log))
    fa, _ = sim.connect("A", "B", latency=0.1,
                        scripted_drops={"A->B#0": frozenset({1})})
    for n in (1, 2, 3):
        packet = data_packet(n)
        sim.schedule(0.0, lambda p=packet: sim.transmit("A", fa, p))
    sim.run()
    assert [p.signed_info.chunk_number for p, _ in log] == [2, 3]


def test_serialization_queues_fifo_per_link():
    sim = Simulator(seed=1)
    arrivals = []
    sim.add_node("A", sink([]))
    sim.add_node("B", lambda p, f: arrivals.append(sim.now))
    fa, _ = sim.connect("A", "B", latency=0.5, capacity=10.0)
    for n in range(3):
        sim.schedule(0.0, lambda n=n: sim.transmit("A", fa, data_packet(n + 1)))
    sim.run()
    assert arrivals == [pytest.approx(0.6), pytest.approx(0.7), pytest.approx(0.8)]


def test_interests_have_negligible_serialization():
    sim = Simulator(seed=1)
    arrivals = []
    sim.add_node("A", sink([]))
    sim.add_node("B", lambda p, f: arrivals.append(sim.now))
    fa, _ = sim.connect("A", "B", latency=0.5, capacity=10.0)
    sim.schedule(0.0, lambda: sim.transmit("A", fa, interest_packet()))
    metrics = sim.run()
    assert arrivals == [pytest.approx(0.5)]
    assert metrics.link("A->B#0")["tx_interests"] == 1
    assert metrics.link("A->B#0")["tx_data"] == 0


def test_consumer_addressed_and_lost_accounting():
    sim = Simulator(seed=3)
    sim.add_node("S", sink([]))
    sim.add_node("C", sink([]), consumer=True)
    fa, _ = sim.connect("S", "C", latency=0.1, loss=0.5)
    for _ in range(200):
        sim.schedule(0.0, lambda: sim.transmit("S", fa, data_packet()))
    metrics = sim.run()
    consumer = metrics.consumer("C")
    assert consumer["addressed"] == 200
    assert consumer["lost"] == metrics.link("S->C#0")["losses"]
    assert 0 < consumer["lost"] < 200


def test_identical_seeds_give_identical_runs():
    def run_once():
        sim = Simulator(seed=77, trace=True)
        log = []
        sim.add_node("A", sink([]))
        sim.add_node("B", sink(log))
        fa, _ = sim.connect("A", "B", latency=0.1, loss=0.3)
        for n in range(50):
            sim.schedule(n * 0.01, lambda n=n: sim.transmit("A", fa, data_packet(n + 1)))
        metrics = sim.run()
        return metrics.to_json(), sim.trace_text()

    assert run_once() == run_once()


def test_run_until_stops_the_clock():
    sim = Simulator(seed=1)
    fired = []
    sim.schedule(1.0, lambda: fired.append(1))
    sim.schedule(3.0, lambda: fired.append(3))
    metrics = sim.run(until=2.0)
    assert fired == [1]
    assert metrics.scalars["end_time"] == 2.0


def test_trace_line_format():
    sim = Simulator(seed=1, trace=True)
    sim.add_node("A", sink([]))
    sim.add_node("B", sink([]))
    fa, _ = sim.connect("A", "B", latency=0.125)
    sim.schedule(0.0, lambda: sim.transmit("A", fa, interest_packet(nonce=42)))
    sim.run()
    assert sim.trace_lines == ["0.125000000\tB\tINT\t0\tobj/f\t42\t"]


def test_metrics_json_is_stably_ordered():
    metrics = Metrics()
    metrics.link("B->A#0")
    metrics.link("A->B#0")
    text = metrics.to_json()
    assert text.index('"A->B#0"') < text.index('"B->A#0"')
