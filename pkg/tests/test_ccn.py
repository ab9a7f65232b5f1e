"""Name handling, tables, and baseline forwarding behavior."""

import random
from collections import OrderedDict

import pytest

from nc3n.ccn import (ContentName, ContentStore, Fib, Interest, NameParseError,
                      NonceMemory, Pit, Selector, SignedInfo, DataPacket,
                      name_resolve_implicit)
from nc3n.node import (Aggregate, BroadcastInterest, DiscardDuplicate,
                       DiscardUnsolicited, DropDuplicate, ForwardData,
                       ForwardInterest, Node, NodeConfig, ReplyFromStore, RepoObject)


def plain_interest(text, nonce=1):
    return Interest(name=ContentName.parse(text), selector=Selector(), nonce=nonce)


def plain_data(text, n, payload=b"x", total=None):
    return DataPacket(name=ContentName.parse(text),
                      signed_info=SignedInfo(chunk_number=n, total_chunks=total),
                      payload=payload)


# --- names -------------------------------------------------------------


def test_parse_bare_name_requests_first_chunk():
    name = ContentName.parse("www.foo.com/Dir/File/")
    assert name.components == ("www.foo.com", "Dir", "File")
    assert name.chunk is None and not name.nc
    assert name_resolve_implicit(name).chunk == 1


def test_parse_explicit_chunk():
    name = ContentName.parse("www.foo.com/Dir/File/C1")
    assert name.chunk == 1
    assert name_resolve_implicit(name).chunk == 1
    assert str(name) == "www.foo.com/Dir/File/C1"
    assert name_resolve_implicit(ContentName.parse("a/C17")).chunk == 17


def test_parse_nc_marker():
    name = ContentName.parse("www.foo.com/Dir/File/NCChunk")
    assert name.nc and name.chunk is None
    assert name_resolve_implicit(name).kind == "coded"
    assert str(name) == "www.foo.com/Dir/File/NCChunk"


def test_parse_errors():
    with pytest.raises(NameParseError):
        ContentName.parse("")
    with pytest.raises(NameParseError):
        ContentName.parse("a/C0")
    with pytest.raises(NameParseError):
        ContentName.parse("C3")  # chunk label with no object components
    with pytest.raises(NameParseError):
        ContentName(components=("a",), chunk=0)


def test_prefix_relation():
    a = ContentName.parse("a/b")
    b = ContentName.parse("a/b/c/C2")
    assert a.is_prefix_of(b)
    assert not b.is_prefix_of(a)
    assert a.is_prefix_of(a)


def test_selector_validation():
    with pytest.raises(ValueError):
        Selector(nc_flag=True, order_required=True)


# --- tables ------------------------------------------------------------


def test_fib_longest_prefix_and_tie_break():
    fib = Fib()
    fib.add_route(("a",), 1)
    fib.add_route(("a", "b"), 2)
    fib.add_route(("a", "b"), 3)
    assert fib.lookup(ContentName.parse("a/b/c")) == [2, 3]
    assert fib.lookup(ContentName.parse("a/x")) == [1]
    assert fib.lookup(ContentName.parse("z")) == []


def test_pit_aggregation_and_matching():
    pit = Pit(lifetime=4.0)
    name = ContentName.parse("a/b")
    entry = pit.create(name, 1, 100, now=0.0)
    pit.add_face(entry, 2, 101)
    pit.add_face(entry, 2, 102)  # same face twice collapses
    assert entry.faces == [1, 2]
    # C1 data satisfies both the bare entry and an explicit C1 entry.
    pit.create(ContentName.parse("a/b/C1"), 3, 103, now=0.0)
    faces = pit.consume_matching(plain_data("a/b/C1", 1), now=1.0)
    assert faces == [3, 1, 2]
    assert len(pit) == 0


def test_pit_expiry():
    pit = Pit(lifetime=4.0)
    pit.create(ContentName.parse("a/b"), 1, 1, now=0.0)
    assert pit.lookup(ContentName.parse("a/b"), now=3.9) is not None
    assert pit.lookup(ContentName.parse("a/b"), now=4.0) is None
    assert pit.expired == 1


def test_content_store_matches_reference_lru():
    rng = random.Random(11)
    store = ContentStore(capacity=8)
    model: "OrderedDict[int, int]" = OrderedDict()

    def model_put(key, size):
        if key in model:
            del model[key]
        model[key] = size
        while sum(model.values()) > 8:
            model.popitem(last=False)

    for step in range(2000):
        key = rng.randrange(20)
        if rng.random() < 0.5:
            size = rng.randint(1, 3)
            store.put(key, f"v{step}", size)
            model_put(key, size)
        else:
            got = store.get(key)
            if key in model:
                model.move_to_end(key)
                assert got is not None
            else:
                assert got is None
        assert list(store.keys()) == list(model.keys())
        assert store.total_size == sum(model.values()) <= 8


def test_content_store_rejects_oversized():
    store = ContentStore(capacity=2)
    assert store.put("a", 1, 1)
    assert not store.put("big", 2, 3)
    assert store.get("a") == 1
    assert store.total_size == 1


def test_nonce_memory_window():
    mem = NonceMemory(capacity=2)
    n = ContentName.parse("x")
    assert not mem.seen_before(n, 1)
    assert mem.seen_before(n, 1)
    assert not mem.seen_before(n, 2)
    assert not mem.seen_before(n, 3)  # evicts nonce 1
    assert not mem.seen_before(n, 1)


# --- interest handling ---------------------------------------------------


def make_router(faces=(0, 1, 2), **cfg):
    node = Node("R", NodeConfig(**cfg))
    for f in faces:
        node.attach_face(f)
    return node


def test_interest_broadcast_without_fib_entry():
    node = make_router()
    actions = node.handle_interest(plain_interest("obj/f"), in_face=0, now=0.0)
    assert actions == [BroadcastInterest((1, 2), actions[0].interest)]
    assert node.pit.lookup(ContentName.parse("obj/f"), 0.0).faces == [0]


def test_interest_aggregation_no_second_forward():
    node = make_router()
    node.handle_interest(plain_interest("obj/f", nonce=1), in_face=0, now=0.0)
    actions = node.handle_interest(plain_interest("obj/f", nonce=2), in_face=2, now=0.1)
    assert actions == [Aggregate("obj/f")]
    assert node.pit.lookup(ContentName.parse("obj/f"), 0.1).faces == [0, 2]
    assert node.counters.pit_aggregations == 1


def test_interest_duplicate_nonce_dropped():
    node = make_router()
    node.handle_interest(plain_interest("obj/f", nonce=9), in_face=0, now=0.0)
    actions = node.handle_interest(plain_interest("obj/f", nonce=9), in_face=1, now=0.1)
    assert actions == [DropDuplicate(9)]


def test_interest_served_from_cache_short_circuits():
    node = make_router()
    node.handle_data(plain_data("obj/f/C1", 1, b"payload", total=2), in_face=1, now=0.0)
    # No PIT entry existed, so that data was discarded; seed the store directly.
    node.store.put(("chunk", "obj/f", 1), (b"payload", 2), 1)
    actions = node.handle_interest(plain_interest("obj/f/C1"), in_face=0, now=1.0)
    assert isinstance(actions[0], ReplyFromStore)
    assert actions[0].face == 0
    assert actions[0].data.payload == b"payload"
    assert node.counters.cache_hits == 1
    assert len(node.pit) == 0


def test_interest_forwarded_along_fib():
    node = make_router()
    node.fib.add_route(("obj",), 2)
    actions = node.handle_interest(plain_interest("obj/f"), in_face=0, now=0.0)
    assert actions == [ForwardInterest((2,), actions[0].interest)]


def test_repository_serves_chunks():
    node = make_router()
    obj = RepoObject.build("obj/f", [b"c1c1", b"c2c2"], k=2, chunk_size=4)
    node.add_repo_object(obj)
    actions = node.handle_interest(plain_interest("obj/f/"), in_face=0, now=0.0)
    data = actions[0].data
    assert data.payload == b"c1c1"
    assert data.name.chunk == 1
    assert data.signed_info.total_chunks == 2
    actions = node.handle_interest(plain_interest("obj/f/C2", nonce=2), in_face=0, now=0.0)
    assert actions[0].data.payload == b"c2c2"


def test_aggregation_at_most_one_upstream_per_face():
    node = make_router(faces=(0, 1, 2, 3))
    node.fib.add_route(("obj",), 3)
    upstream = 0
    for i in range(5):
        actions = node.handle_interest(plain_interest("obj/f", nonce=i), in_face=i % 3, now=0.0)
        upstream += sum(1 for a in actions if isinstance(a, ForwardInterest))
    assert upstream == 1


# --- data handling --------------------------------------------------------


def test_duplicate_plain_copy_discarded():
    node = make_router()
    node.handle_interest(plain_interest("obj/f"), in_face=0, now=0.0)  # broadcast to 1,2
    first = node.handle_data(plain_data("obj/f/C1", 1, b"c1", total=2), in_face=1, now=0.1)
    assert any(isinstance(a, ForwardData) and a.faces == (0,) for a in first)
    second = node.handle_data(plain_data("obj/f/C1", 1, b"c1", total=2), in_face=2, now=0.2)
    assert second == [DiscardDuplicate()]
    assert node.counters.duplicate_data == 1


def test_unsolicited_data_discarded_and_counted():
    node = make_router()
    actions = node.handle_data(plain_data("obj/f/C1", 1, b"c1"), in_face=1, now=0.0)
    assert actions == [DiscardUnsolicited()]
    assert node.counters.unsolicited_data == 1


def test_data_forwarded_to_all_pit_faces():
    node = make_router(faces=(0, 1, 2, 3))
    node.fib.add_route(("obj",), 3)
    node.handle_interest(plain_interest("obj/f", nonce=1), in_face=0, now=0.0)
    node.handle_interest(plain_interest("obj/f", nonce=2), in_face=1, now=0.0)
    actions = node.handle_data(plain_data("obj/f/C1", 1, b"c1", total=1), in_face=3, now=0.1)
    fwd = [a for a in actions if isinstance(a, ForwardData)]
    assert fwd and fwd[0].faces == (0, 1)
    # PIT soundness: nothing pending afterwards.
    assert len(node.pit) == 0


def test_route_learning_from_data_arrival():
    node = make_router()
    node.handle_interest(plain_interest("obj/f"), in_face=0, now=0.0)
    node.handle_data(plain_data("obj/f/C1", 1, b"c1", total=2), in_face=1, now=0.1)
    assert node.fib.lookup(ContentName.parse("obj/f/C2")) == [1]


def test_malformed_interest_counted():
    node = make_router()
    bad = Interest.__new__(Interest)
    object.__setattr__(bad, "name", object())
    object.__setattr__(bad, "selector", Selector())
    object.__setattr__(bad, "nonce", 5)

    class BadName:
        nc = False
        chunk = 0
        components = ("x",)

        def __str__(self):
            return "x/C0"

    object.__setattr__(bad, "name", BadName())
    assert node.handle_interest(bad, in_face=0, now=0.0) == []
    assert node.counters.malformed == 1
