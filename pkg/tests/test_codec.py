import math

import numpy as np
import pytest

from lrvq.codec import (
    HEADER_BYTES,
    CodecConfig,
    EncodedStream,
    MacCounter,
    decode,
    deserialize,
    encode,
    payload_bits,
    serialize,
)
from lrvq.errors import (
    CodebookMismatch,
    CorruptStream,
    InvalidConfig,
    UnsupportedVersion,
)
from lrvq.metrics import lowrank_decoder_macs, mse
from lrvq.patching import ImageTensor
from lrvq.synthetic import synth_image
from lrvq.vq import Codebook, GainRange
from oracles import patchwise_truncation_mse


def small_book(p=8, k=16, seed=0):
    return Codebook.from_vectors(np.random.default_rng(seed).normal(size=(k, p)), seed=seed)


def random_stream(g):
    p = int(g.integers(1, 9))
    r = int(g.integers(1, p + 1))
    k = int(g.integers(2, 300))
    cfg = CodecConfig(
        p, r, int(g.integers(1, 4)), k,
        combine_mode=str(g.choice(["sum", "average"])),
        loop_mode=str(g.choice(["open", "closed"])),
        gain_range=GainRange(float(np.float32(g.uniform(0.01, 1))), float(np.float32(g.uniform(1, 50)))),
    )
    h, w, c = int(g.integers(1, 20)), int(g.integers(1, 20)), int(g.integers(1, 4))
    s = EncodedStream(cfg, max(h, p), w, c, int(g.integers(0, 2**32)))
    n = s.n_components
    s.components = np.stack(
        [g.integers(0, k, n), g.integers(0, k, n), g.integers(0, 256, n)], axis=1
    )
    return s


def test_bypass_full_rank_is_exact():
    img = synth_image(3)
    stream = encode(img, CodecConfig(8, 8, 1, 256), None, bypass=True)
    assert mse(decode(stream, None), img) < 1e-12


def test_payload_bits_example():
    cfg = CodecConfig(8, 2, 2, 256)
    assert payload_bits(2, 2, 1, 2, 2, 256) == 384
    s = EncodedStream(cfg, 16, 16, 1, 0)
    assert s.payload_bits == 384
    assert payload_bits(1, 1, 1, 1, 1, 2) == 10


def test_desk_image_floor_and_stream_size(desk_codebook, eval_corpus):
    cfg = CodecConfig(8, 2, 2, 256)
    for img in eval_corpus:
        stream = encode(img, cfg, desk_codebook)
        data = serialize(stream)
        assert len(data) == 795
        out = decode(stream, desk_codebook)
        assert mse(out, img) >= patchwise_truncation_mse(img.data, 8, 4)


def test_closed_loop_not_worse_than_open(desk_codebook, eval_corpus):
    for img in eval_corpus:
        errs = {}
        for loop in ("open", "closed"):
            cfg = CodecConfig(8, 2, 2, 256, loop_mode=loop)
            errs[loop] = mse(decode(encode(img, cfg, desk_codebook), desk_codebook), img)
        assert errs["closed"] <= errs["open"] + 1e-12


def test_serialize_round_trip_100_streams():
    g = np.random.default_rng(99)
    for _ in range(100):
        s = random_stream(g)
        data = serialize(s)
        back = deserialize(data)
        assert serialize(back) == data
        assert back == s
        assert len(data) == HEADER_BYTES + math.ceil(s.payload_bits / 8)


def test_minimal_stream_length():
    cfg = CodecConfig(1, 1, 1, 2, gain_range=GainRange(1.0, 1.0))
    s = EncodedStream(cfg, 1, 1, 1, 7, np.array([[1, 0, 200]]))
    data = serialize(s)
    assert len(data) == 27 + math.ceil(10 / 8) == 29
    assert deserialize(data) == s


def test_every_payload_bit_flip_changes_one_component():
    cfg = CodecConfig(4, 2, 2, 16, gain_range=GainRange(0.5, 4.0))
    g = np.random.default_rng(5)
    s = EncodedStream(cfg, 8, 4, 1, 1234)
    n = s.n_components
    s.components = np.stack([g.integers(0, 16, n), g.integers(0, 16, n), g.integers(0, 256, n)], 1)
    data = serialize(s)
    for bit in range(s.payload_bits):
        flipped = bytearray(data)
        flipped[HEADER_BYTES + bit // 8] ^= 0x80 >> (bit % 8)
        comp = deserialize(bytes(flipped)).components
        changed = np.flatnonzero(np.any(comp != s.components, axis=1))
        assert changed.tolist() == [bit // 16]


def test_zero_gain_codes_decode_to_zeros():
    book = small_book(4)
    cfg = CodecConfig(4, 2, 1, 16, gain_range=GainRange(0.1, 3.0))
    s = EncodedStream(cfg, 6, 5, 2, book.content_hash)
    n = s.n_components
    s.components = np.stack([np.arange(n) % 16, (np.arange(n) * 3) % 16, np.zeros(n, int)], 1)
    out = decode(deserialize(serialize(s)), book)
    assert out.shape == (2, 6, 5)
    assert not out.data.any()


@pytest.mark.parametrize(
    "shape,rank,iters,expected", [((1, 64, 64), 2, 2, 18432), ((3, 64, 64), 4, 3, 165888)]
)
def test_mac_counter(shape, rank, iters, expected):
    book = small_book(8, 32)
    img = ImageTensor(np.random.default_rng(1).uniform(size=shape))
    stream = encode(img, CodecConfig(8, rank, iters, 32), book)
    counter = MacCounter()
    decode(stream, book, counter)
    assert counter.count == expected == lowrank_decoder_macs(8, rank, iters, 8, 8, shape[0])


def test_decode_errors():
    book = small_book(4)
    img = ImageTensor(np.random.default_rng(2).uniform(size=(1, 8, 8)))
    stream = encode(img, CodecConfig(4, 1, 1, 16), book)
    with pytest.raises(CodebookMismatch):
        decode(stream, small_book(4, seed=1))
    data = serialize(stream)
    with pytest.raises(CorruptStream):
        deserialize(data[:-1])
    with pytest.raises(CorruptStream):
        deserialize(data[:10])
    with pytest.raises(CorruptStream):
        deserialize(b"XXXX" + data[4:])
    with pytest.raises(CorruptStream):
        deserialize(data + b"\0")
    with pytest.raises(UnsupportedVersion):
        deserialize(data[:4] + bytes([9]) + data[5:])


def test_index_out_of_range_rejected():
    cfg = CodecConfig(4, 1, 1, 5, gain_range=GainRange(1.0, 2.0))
    s = EncodedStream(cfg, 4, 4, 1, 0, np.array([[4, 4, 1]]))
    data = bytearray(serialize(s))
    data[HEADER_BYTES] |= 0xE0  # left index becomes 7
    with pytest.raises(CorruptStream):
        deserialize(bytes(data))


def test_bypass_cannot_serialize():
    img = ImageTensor(np.zeros((1, 8, 8)))
    with pytest.raises(InvalidConfig):
        serialize(encode(img, CodecConfig(8, 1, 1, 16), None, bypass=True))


def test_config_errors():
    with pytest.raises(InvalidConfig):
        CodecConfig(8, 9, 1, 16)
    with pytest.raises(InvalidConfig):
        CodecConfig(8, 1, 1, 1)
    with pytest.raises(InvalidConfig):
        CodecConfig(8, 1, 1, 16, combine_mode="max")
    with pytest.raises(InvalidConfig):
        encode(ImageTensor(np.zeros((1, 8, 8))), CodecConfig(8, 1, 1, 16), small_book(4))
    with pytest.raises(InvalidConfig):
        encode(ImageTensor(np.zeros((1, 4, 4))), CodecConfig(8, 1, 1, 16), small_book(8))


def test_encode_is_deterministic(desk_codebook, eval_corpus):
    cfg = CodecConfig(8, 2, 2, 256)
    a = serialize(encode(eval_corpus[0], cfg, desk_codebook))
    b = serialize(encode(ImageTensor(eval_corpus[0].data.copy()), cfg, desk_codebook))
    assert a == b
    out1 = decode(deserialize(a), desk_codebook)
    out2 = decode(deserialize(b), desk_codebook)
    assert out1.data.tobytes() == out2.data.tobytes()


def test_header_fields(desk_codebook, eval_corpus):
    cfg = CodecConfig(8, 2, 2, 256, combine_mode="average", loop_mode="open")
    data = serialize(encode(eval_corpus[1], cfg, desk_codebook))
    back = deserialize(data)
    assert back.config.combine_mode == "average" and back.config.loop_mode == "open"
    assert (back.height, back.width, back.channels) == (64, 64, 1)
    assert back.codebook_hash == desk_codebook.content_hash
    assert data[:4] == b"LRVQ"
