import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tests.oracles import reference_hmac_sha256
from vflshap.crypto import (
    canonical_id,
    encrypt_column,
    encrypt_id,
    hmac_sha256,
    is_encrypted_id,
    load_key,
)
from vflshap.errors import ConfigurationError

# RFC 4231 section 4, HMAC-SHA-256 outputs
RFC4231 = [
    (b"\x0b" * 20, b"Hi There",
     "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"),
    (b"Jefe", b"what do ya want for nothing?",
     "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"),
    (b"\xaa" * 20, b"\xdd" * 50,
     "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"),
    (bytes(range(1, 26)), b"\xcd" * 50,
     "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b"),
    (b"\x0c" * 20, b"Test With Truncation",
     "a3b6167473100ee06e0c796c2955552b"),
    (b"\xaa" * 131, b"Test Using Larger Than Block-Size Key - Hash Key First",
     "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"),
    (b"\xaa" * 131,
     b"This is a test using a larger than block-size key and a larger than block-size data. "
     b"The key needs to be hashed before being used by the HMAC algorithm.",
     "9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2"),
]


@pytest.mark.parametrize("key,msg,expected", RFC4231)
def test_rfc4231_vectors(key, msg, expected):
    # test case 5 publishes only the first 128 bits
    assert hmac_sha256(key, msg).hex()[: len(expected)] == expected
    assert reference_hmac_sha256(key, msg).hex()[: len(expected)] == expected


def test_double_pass_on_rfc_case_1():
    key = b"\x0b" * 20
    inner = bytes.fromhex(RFC4231[0][2])
    assert encrypt_id(key, "Hi There") == reference_hmac_sha256(key, inner).hex()


@settings(max_examples=1000, deadline=None)
@given(key=st.binary(min_size=16, max_size=200), raw=st.binary(max_size=64))
def test_double_hmac_matches_reference_composition(key, raw):
    expected = reference_hmac_sha256(key, reference_hmac_sha256(key, raw))
    assert encrypt_id(key, raw) == expected.hex()


def test_deterministic_and_fixed_length():
    key = os.urandom(32)
    a = encrypt_id(key, "id_001")
    assert a == encrypt_id(key, "id_001")
    assert len(a) == 64 and is_encrypted_id(a)
    assert a != encrypt_id(key, "id_002")


def test_canonical_encoding():
    assert canonical_id(42) == b"42"
    assert canonical_id(-7) == b"-7"
    assert canonical_id("café") == "café".encode("utf-8")
    key = bytes(16)
    assert encrypt_id(key, 42) == encrypt_id(key, "42")
    with pytest.raises(TypeError):
        canonical_id(True)
    with pytest.raises(TypeError):
        canonical_id(1.5)


def test_encrypt_column():
    key = bytes(range(16))
    assert encrypt_column(key, []) == []
    a, b = encrypt_column(key, ["a", "a"])
    assert a == b
    ids = [f"row-{i}" for i in range(10_000)]
    assert len(set(encrypt_column(key, ids))) == 10_000
    assert encrypt_column(key, ids[:3]) == [encrypt_id(key, i) for i in ids[:3]]


def test_injective_on_large_corpus():
    key = bytes(range(32))
    digests = {encrypt_id(key, i) for i in range(100_000)}
    assert len(digests) == 100_000


def test_avalanche_on_single_key_bit():
    key = bytearray(range(32))
    flipped = bytearray(key)
    flipped[0] ^= 1
    for i in range(128):
        assert encrypt_id(bytes(key), f"sample-{i}") != encrypt_id(bytes(flipped), f"sample-{i}")


@pytest.mark.parametrize("bad", [b"", b"short", bytes(15)])
def test_short_or_empty_key_rejected(bad):
    with pytest.raises(ConfigurationError):
        encrypt_id(bad, "x")


def test_load_key_from_hex_file(tmp_path):
    path = tmp_path / "key.hex"
    path.write_text("00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff\n")
    assert load_key(path) == bytes.fromhex("00112233445566778899aabbccddeeff" * 2)


def test_load_key_raw_bytes_file(tmp_path):
    path = tmp_path / "key.bin"
    raw = bytes(range(200, 232))
    path.write_bytes(raw)
    assert load_key(path) == raw


def test_load_key_from_env(monkeypatch):
    monkeypatch.setenv("VFL_KEY", "ab" * 16)
    assert load_key(env_var="VFL_KEY") == b"\xab" * 16
    monkeypatch.setenv("VFL_KEY", "zz")
    with pytest.raises(ConfigurationError):
        load_key(env_var="VFL_KEY")
    monkeypatch.delenv("VFL_KEY")
    with pytest.raises(ConfigurationError):
        load_key(env_var="VFL_KEY")


def test_load_key_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_key()
    with pytest.raises(ConfigurationError):
        load_key(tmp_path / "missing")
    short = tmp_path / "short"
    short.write_text("abcd")
    with pytest.raises(ConfigurationError):
        load_key(short)
