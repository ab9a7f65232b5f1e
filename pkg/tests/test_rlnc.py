"""RLNC encoder/recoder/decoder tests with gf256-level oracles."""

import random

import pytest

from nc3n import rlnc
from nc3n.rlnc import CodedChunk, DecoderState, Generation, InsufficientRankError


def slow_mul(a, b):
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11D
        b >>= 1
    return r


def slow_combine(chunks, coeffs):
    size = len(chunks[0])
    out = bytearray(size)
    for c, chunk in zip(coeffs, chunks):
        for i in range(size):
            out[i] ^= slow_mul(c, chunk[i])
    return bytes(out)


def make_gen(gen_id=1, chunks=(b"\x10\x20", b"\x30\x40")):
    return Generation.from_chunks(gen_id, list(chunks))


def test_generation_padding_and_lengths():
    gen = Generation.from_chunks(9, [b"abcd", b"ef"], chunk_size=4)
    assert gen.chunks == (b"abcd", b"ef\x00\x00")
    assert gen.original_lengths == (4, 2)
    with pytest.raises(ValueError):
        Generation.from_chunks(9, [])
    with pytest.raises(ValueError):
        Generation.from_chunks(9, [b"abcd"], chunk_size=2)


def test_systematic_unit_vectors():
    gen = Generation.from_chunks(1, [b"AA", b"BB", b"CC", b"DD"])
    c0 = rlnc.encode_systematic(gen, 0)
    assert c0.vector == bytes([1, 0, 0, 0]) and c0.payload == b"AA"
    c3 = rlnc.encode_systematic(gen, 3)
    assert c3.vector == bytes([0, 0, 0, 1]) and c3.payload == b"DD"
    single = Generation.from_chunks(2, [b"zz"])
    s = rlnc.encode_systematic(single, 0)
    assert s.vector == bytes([1]) and s.payload == b"zz"
    with pytest.raises(ValueError):
        rlnc.encode_systematic(gen, 4)


def test_combine_matches_paper_multipath_vectors():
    # C1 + 2*C2 and 2*C1 + C2 for a two-chunk object.
    c1, c2 = b"\x01\x80\xFF\x00", b"\x02\x40\x00\x10"
    vec, pay = rlnc.combine([bytes([1, 0]), bytes([0, 1])], [c1, c2], bytes([1, 2]))
    assert vec == bytes([1, 2])
    assert pay == slow_combine([c1, c2], [1, 2])
    vec2, pay2 = rlnc.combine([bytes([1, 0]), bytes([0, 1])], [c1, c2], bytes([2, 1]))
    assert vec2 == bytes([2, 1])
    assert pay2 == slow_combine([c1, c2], [2, 1])


def test_encode_random_matches_independent_recomputation():
    gen = Generation.from_chunks(5, [b"\x11\x22", b"\x33\x44", b"\x55\x66"])
    chunk = rlnc.encode_random(gen, random.Random(1234))
    assert any(chunk.vector)
    assert chunk.payload == slow_combine(gen.chunks, chunk.vector)
    # Same seed, same draw.
    again = rlnc.encode_random(gen, random.Random(1234))
    assert again == chunk


def test_encode_random_single_chunk_decodable():
    gen = Generation.from_chunks(3, [b"\xAB\xCD"])
    chunk = rlnc.encode_random(gen, random.Random(9))
    assert chunk.vector != b"\x00"
    state = DecoderState(gen_id=3, k=1, chunk_size=2)
    assert state.add_chunk(chunk)
    assert state.decode() == [b"\xAB\xCD"]


def test_recode_combination_and_span():
    gen = make_gen()
    a = CodedChunk(1, bytes([1, 2]), slow_combine(gen.chunks, [1, 2]))
    b = CodedChunk(1, bytes([2, 1]), slow_combine(gen.chunks, [2, 1]))
    vec, pay = rlnc.combine([a.vector, b.vector], [a.payload, b.payload], bytes([1, 1]))
    assert vec == bytes([3, 3])
    assert pay == bytes(x ^ y for x, y in zip(a.payload, b.payload))

    rec = rlnc.recode([a, b], random.Random(7))
    state = DecoderState(gen_id=1, k=2, chunk_size=2)
    state.add_chunk(a)
    state.add_chunk(b)
    # Anything recoded from {a, b} lies in their span.
    assert not state.is_innovative(rec.vector)
    assert not state.add_chunk(rec)

    lone = rlnc.recode([a], random.Random(3))
    single_state = DecoderState(gen_id=1, k=2, chunk_size=2)
    single_state.add_chunk(a)
    assert not single_state.is_innovative(lone.vector)


def test_recode_rejects_mixed_or_empty():
    gen = make_gen()
    a = rlnc.encode_systematic(gen, 0)
    other = CodedChunk(2, bytes([1, 0]), b"\x00\x00")
    with pytest.raises(ValueError):
        rlnc.recode([a, other], random.Random(0))
    with pytest.raises(ValueError):
        rlnc.recode([], random.Random(0))


def test_dof_add_examples():
    state = DecoderState(gen_id=1, k=2, chunk_size=2)
    gen = make_gen()
    first = CodedChunk(1, bytes([1, 2]), slow_combine(gen.chunks, [1, 2]))
    assert state.add_chunk(first) is True
    assert state.rank == 1

    # [2,4] = 2 * [1,2] in GF(256): redundant.
    dep = CodedChunk(1, bytes([2, 4]), slow_combine(gen.chunks, [2, 4]))
    assert bytes([slow_mul(2, 1), slow_mul(2, 2)]) == bytes([2, 4])
    assert state.add_chunk(dep) is False
    assert state.rank == 1

    second = CodedChunk(1, bytes([2, 1]), slow_combine(gen.chunks, [2, 1]))
    assert state.add_chunk(second) is True
    assert state.rank == 2 and state.decodable
    assert state.decode() == list(gen.chunks)


def test_dof_add_generation_mismatch():
    state = DecoderState(gen_id=1, k=2, chunk_size=2)
    with pytest.raises(ValueError):
        state.add_chunk(CodedChunk(2, bytes([1, 0]), b"\x00\x00"))


def test_is_innovative_brute_force_span():
    state = DecoderState.from_rows(1, 3, [bytes([1, 0, 0]), bytes([0, 1, 0])])
    # Enumerate span over a coefficient subset: nothing reaches [1,1,1].
    span = set()
    for c1 in range(8):
        for c2 in range(8):
            span.add(bytes([c1, c2, 0]))
    assert bytes([1, 1, 1]) not in span
    assert state.is_innovative(bytes([1, 1, 1]))
    assert not state.is_innovative(bytes([5, 7, 0]))

    empty = DecoderState(gen_id=1, k=3, chunk_size=0)
    assert empty.is_innovative(bytes([0, 0, 9]))
    full = DecoderState.from_rows(1, 2, [bytes([1, 0]), bytes([0, 1])])
    assert not full.is_innovative(bytes([0xAA, 0xBB]))
    with pytest.raises(ValueError):
        state.is_innovative(bytes([1, 1]))


def test_decode_identity_from_systematic():
    gen = Generation.from_chunks(4, [b"11", b"22", b"33"])
    state = DecoderState(gen_id=4, k=3, chunk_size=2)
    for i in range(3):
        state.add_chunk(rlnc.encode_systematic(gen, i))
    assert state.decode() == list(gen.chunks)


def test_decode_from_random_combinations_after_losses():
    # Three packets, four combinations survive path losses, three suffice.
    gen = Generation.from_chunks(7, [b"p1p1", b"p2p2", b"p3p3"])
    rng = random.Random(42)
    state = DecoderState(gen_id=7, k=3, chunk_size=4)
    received = [rlnc.encode_random(gen, rng) for _ in range(4)]
    for chunk in received:
        state.add_chunk(chunk)
    assert state.decodable
    assert state.decode() == list(gen.chunks)


def test_decode_refuses_with_rank_report():
    state = DecoderState(gen_id=1, k=3, chunk_size=1)
    state.add_chunk(CodedChunk(1, bytes([1, 0, 0]), b"a"))
    with pytest.raises(InsufficientRankError) as err:
        state.decode()
    assert err.value.rank == 1 and err.value.k == 3


def test_roundtrip_k8_first_innovative_of_twenty():
    rng = random.Random(2024)
    chunks = [rng.randbytes(32) for _ in range(8)]
    gen = Generation.from_chunks(11, chunks)
    state = DecoderState(gen_id=11, k=8, chunk_size=32)
    innovative = 0
    for _ in range(20):
        if state.add_chunk(rlnc.encode_random(gen, rng)):
            innovative += 1
    assert innovative == 8
    assert state.decode() == list(gen.chunks)


def test_rank_monotonicity():
    rng = random.Random(5)
    gen = Generation.from_chunks(1, [rng.randbytes(8) for _ in range(6)])
    state = DecoderState(gen_id=1, k=6, chunk_size=8)
    prev = 0
    for _ in range(30):
        innovative = state.add_chunk(rlnc.encode_random(gen, rng))
        assert state.rank == prev + (1 if innovative else 0)
        prev = state.rank
    assert state.rank == 6


def test_systematic_prefix_partial_decoding():
    gen = Generation.from_chunks(2, [b"aa", b"bb", b"cc", b"dd"])
    state = DecoderState(gen_id=2, k=4, chunk_size=2)
    for i in range(3):
        state.add_chunk(rlnc.encode_systematic(gen, i))
        got = state.recovered_sources()
        assert set(got) == set(range(i + 1))
        assert all(got[j] == gen.chunks[j] for j in got)


def test_roundtrip_mixed_sources_small_sweep():
    # Short version of the acceptance sweep for quick iteration.
    for trial in range(250):
        rng = random.Random(100_000 + trial)
        k = rng.randint(1, 16)
        size = rng.randint(1, 64)
        gen = Generation.from_chunks(trial, [rng.randbytes(size) for _ in range(k)])
        state = DecoderState(gen_id=trial, k=k, chunk_size=size)
        relay: list[CodedChunk] = []
        guard = 0
        while not state.decodable:
            guard += 1
            assert guard < 400
            kind = rng.random()
            if kind < 0.35:
                chunk = rlnc.encode_systematic(gen, rng.randrange(k))
            elif kind < 0.75 or not relay:
                chunk = rlnc.encode_random(gen, rng)
            else:
                chunk = rlnc.recode(relay, rng)
            relay.append(chunk)
            if rng.random() < 0.8:
                state.add_chunk(chunk)
        assert state.decode() == list(gen.chunks)


def test_redundancy_rate_below_one_percent_near_full_rank():
    # Worst case: rank k-1, fresh uniform vectors. Expected rate 1/256.
    rng = random.Random(77)
    for k in (2, 8, 16):
        gen = Generation.from_chunks(k, [rng.randbytes(4) for _ in range(k)])
        state = DecoderState(gen_id=k, k=k, chunk_size=4)
        while state.rank < k - 1:
            state.add_chunk(rlnc.encode_random(gen, rng))
        trials, redundant = 8000, 0
        for _ in range(trials):
            if not state.is_innovative(rlnc.encode_random(gen, rng).vector):
                redundant += 1
        assert redundant / trials < 0.01


def test_wire_format_golden_vector():
    chunk = CodedChunk(gen_id=0x0102030405060708, vector=bytes([0x01, 0x02, 0x03]),
                       payload=bytes([0xDE, 0xAD, 0xBE, 0xEF]))
    expected = bytes.fromhex("0102030405060708" "0003" "00000004"
                             "010203" "deadbeef")
    assert chunk.to_bytes() == expected
    assert CodedChunk.from_bytes(expected) == chunk


def test_wire_format_roundtrip_random():
    rng = random.Random(31)
    for _ in range(50):
        k = rng.randint(1, 40)
        chunk = CodedChunk(gen_id=rng.getrandbits(64), vector=rng.randbytes(k),
                           payload=rng.randbytes(rng.randint(1, 200)))
        assert CodedChunk.from_bytes(chunk.to_bytes()) == chunk
    with pytest.raises(ValueError):
        CodedChunk.from_bytes(chunk.to_bytes()[:-1])
