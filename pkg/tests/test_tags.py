import random

import pytest

from dnas.errors import CapacityError, TagLockedError, TagStateError
from dnas.keys import Signature, generate_keypair, sign_tag_payload
from dnas.tags import (
    TAG_MEMORY_BYTES,
    NfcTag,
    counterfeit_copy,
    manufacture_tag,
)


@pytest.fixture
def signature():
    kp = generate_keypair(b"\x11" * 32)
    return sign_tag_payload("W1", "tag", "dev", kp)


@pytest.fixture
def tag():
    return NfcTag(uid=bytes(range(7)))


def test_fresh_tag_write_then_read(tag, signature):
    tag.write("W1", signature, write_counter=1)
    out = tag.read()
    assert out.wine_id == "W1"
    assert out.signature == signature
    assert out.write_counter == 1
    assert out.uid == bytes(range(7))


def test_write_counter_never_decreases(tag, signature):
    tag.write("W1", signature, write_counter=3)
    tag.write("W1", signature, write_counter=1)
    assert tag.write_counter == 3


def test_read_counter_increments_per_read(tag, signature):
    tag.write("W1", signature, write_counter=1)
    first = tag.read()
    second = tag.read()
    assert (first.read_counter, second.read_counter) == (1, 2)
    assert tag.read_counter == 2


def test_oversize_payload_rejected(tag, signature):
    with pytest.raises(CapacityError):
        tag.write("W" * 900, signature, write_counter=1)
    assert tag.memory == b""


def test_max_legal_payload_fits(signature):
    # serialized payload must stay within 888 bytes for realistic identifiers
    tag = NfcTag(uid=bytes(7))
    tag.write("W-" + "x" * 120, signature, write_counter=10**6)
    assert len(tag.memory) <= TAG_MEMORY_BYTES


def test_protection_blocks_unauthenticated_access(tag, signature):
    tag.write("W1", signature, write_counter=1)
    password = tag.enable_protection()
    assert len(password) == 4
    with pytest.raises(TagLockedError):
        tag.read()
    with pytest.raises(TagLockedError):
        tag.read(password=b"\x00\x00\x00\x00" if password != b"\x00\x00\x00\x00" else b"\x01\x00\x00\x00")
    assert tag.read_counter == 0  # failed reads do not bump the counter
    assert tag.read(password=password).wine_id == "W1"


def test_wrong_password_write_leaves_payload(tag, signature):
    tag.write("W1", signature, write_counter=1)
    password = tag.enable_protection()
    other = sign_tag_payload("W2", "t", "d", generate_keypair(b"\x12" * 32))
    with pytest.raises(TagLockedError):
        tag.write("W2", other, write_counter=2, password=None)
    assert tag.read(password=password).wine_id == "W1"


def test_enable_protection_twice(tag):
    tag.enable_protection()
    with pytest.raises(TagStateError):
        tag.enable_protection()


def test_password_always_four_bytes():
    rng = random.Random(8)
    for _ in range(1000):
        tag = manufacture_tag(randbytes=rng.randbytes)
        assert len(tag.enable_protection(randbytes=rng.randbytes)) == 4


def test_read_before_any_write(tag):
    with pytest.raises(TagStateError):
        tag.read()


def test_uid_is_seven_bytes():
    with pytest.raises(TagStateError):
        NfcTag(uid=bytes(8))
    assert len(manufacture_tag().uid) == 7


def test_counterfeit_copy_differs_in_uid(tag, signature):
    rng = random.Random(9)
    tag.write("W1", signature, write_counter=1)
    password = tag.enable_protection(randbytes=rng.randbytes)
    fake = counterfeit_copy(tag, randbytes=rng.randbytes)
    assert fake.uid != tag.uid
    assert fake.read(password=password).wine_id == "W1"
    assert fake.write_counter == tag.write_counter


def test_signature_roundtrip_through_tag(tag):
    kp = generate_keypair(b"\x13" * 32)
    sig = sign_tag_payload("WINE", "TAG", "DEV", kp)
    tag.write("WINE", sig, write_counter=1)
    out = tag.read()
    assert isinstance(out.signature, Signature)
    assert out.signature.to_bytes() == sig.to_bytes()
