import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnas.content_store import (
    ContentId,
    PrivateNetwork,
    base58_decode,
    base58_encode,
)
from dnas.errors import AuthError, EncodingError, MembershipError, NotFoundError

# base58btc reference strings (bitcoin alphabet)
HELLO_WORLD_B58 = "StV1DL6CwTryKyV"

# CIDv0 of the empty blob: base58(0x1220 || sha256("")), sha256("") being
# the published e3b0c442... digest.
EMPTY_CID = "QmdfTbBqBPQ7VNxZEYEj14VmRuZBkqFbiwReogJgS1zR1n"


@pytest.fixture
def network():
    net = PrivateNetwork(admin="admin")
    for node in ("n1", "n2", "n3"):
        net.add_member("admin", node)
    return net


def test_base58_reference_strings():
    assert base58_encode(b"hello world") == HELLO_WORLD_B58
    assert base58_decode(HELLO_WORLD_B58) == b"hello world"
    assert base58_encode(b"\x00\x00hello world") == "11" + HELLO_WORLD_B58
    assert base58_decode("11" + HELLO_WORLD_B58) == b"\x00\x00hello world"


@given(st.binary(min_size=0, max_size=80))
@settings(max_examples=200, deadline=None)
def test_base58_roundtrip(data):
    assert base58_decode(base58_encode(data)) == data


def test_empty_content_id_matches_published_vector(network):
    cid = network.add("n1", b"")
    assert cid.text == EMPTY_CID
    assert cid.digest == hashlib.sha256(b"").digest()
    assert cid.digest.hex().startswith("e3b0c442")


def test_content_id_shape():
    cid = ContentId.for_content(b"some wine record subset")
    assert len(cid.text) == 46
    assert cid.text.startswith("Qm")
    raw = base58_decode(cid.text)
    assert raw[:2] == b"\x12\x20"
    assert raw[2:] == hashlib.sha256(b"some wine record subset").digest()


def test_content_id_rejects_garbage():
    with pytest.raises(EncodingError):
        ContentId("Qmnot-base58-at-all!!")
    with pytest.raises(EncodingError):
        ContentId(base58_encode(b"\x11\x20" + bytes(32)))


def test_add_idempotent(network):
    first = network.add("n1", b"block")
    second = network.add("n1", b"block")
    assert first == second
    assert network.holders(first) == {"n1"}


def test_distinct_content_distinct_id(network):
    assert network.add("n1", b"block-a") != network.add("n1", b"block-b")


def test_add_requires_membership(network):
    with pytest.raises(MembershipError):
        network.add("outsider", b"data")


def test_get_replicates_onto_reader(network):
    cid = network.add("n1", b"shared data")
    assert network.holders(cid) == {"n1"}
    assert network.get("n2", cid) == b"shared data"
    assert network.holders(cid) == {"n1", "n2"}


def test_get_unknown_id(network):
    with pytest.raises(NotFoundError):
        network.get("n1", ContentId.for_content(b"never added"))


def test_get_requires_membership(network):
    cid = network.add("n1", b"data")
    with pytest.raises(MembershipError):
        network.get("outsider", cid)


def test_pin_survives_gc(network):
    cid = network.add("n1", b"keep me")
    network.get("n2", cid)
    network.pin("n2", cid)
    network.gc("n2")
    assert network._nodes["n2"].holds(cid)
    assert network.get("n2", cid) == b"keep me"


def test_unpinned_cache_evicted_but_refetchable(network):
    cid = network.add("n1", b"cache me")
    network.pin("n1", cid)
    network.get("n2", cid)
    assert network.gc("n2") == 1
    assert not network._nodes["n2"].holds(cid)
    assert network.get("n2", cid) == b"cache me"  # refetched from n1


def test_unpin_never_pinned_is_noop(network):
    cid = network.add("n1", b"x")
    network.unpin("n1", cid)  # acknowledgment, no error


def test_pin_unfetchable_raises(network):
    with pytest.raises(NotFoundError):
        network.pin("n1", ContentId.for_content(b"nowhere"))


def test_membership_admin_only(network):
    with pytest.raises(AuthError):
        network.add_member("n1", "n4")
    with pytest.raises(AuthError):
        network.remove_member("n1", "n2")


def test_removed_member_loses_access(network):
    cid = network.add("n1", b"data")
    network.remove_member("admin", "n2")
    with pytest.raises(MembershipError):
        network.get("n2", cid)


def test_remove_sole_holder_drops_block(network):
    cid = network.add("n1", b"single copy")
    network.remove_member("admin", "n1")
    for reader in ("n2", "n3"):
        with pytest.raises(NotFoundError):
            network.get(reader, cid)


def test_remove_with_replica_still_readable(network):
    cid = network.add("n1", b"replicated")
    network.get("n2", cid)
    network.remove_member("admin", "n1")
    assert network.get("n3", cid) == b"replicated"


def test_tampered_block_treated_as_not_found(network):
    cid = network.add("n1", b"pristine")
    network._nodes["n1"].blocks[cid.text] = b"mutated!"
    with pytest.raises(NotFoundError):
        network.get("n2", cid)


def test_tampered_block_with_honest_replica(network):
    cid = network.add("n1", b"pristine")
    network.get("n2", cid)
    network._nodes["n1"].blocks[cid.text] = b"mutated!"
    assert network.get("n3", cid) == b"pristine"


def test_single_byte_perturbation_changes_id():
    base = b"wine record subset bytes"
    base_id = ContentId.for_content(base)
    for i in range(len(base)):
        mutated = bytearray(base)
        mutated[i] ^= 0x01
        assert ContentId.for_content(bytes(mutated)) != base_id


def test_holder_count_never_decreases_except_gc_or_removal(network):
    cid = network.add("n1", b"monotone")
    counts = [len(network.holders(cid))]
    network.get("n2", cid)
    counts.append(len(network.holders(cid)))
    network.get("n3", cid)
    counts.append(len(network.holders(cid)))
    assert counts == sorted(counts)


def test_path_argument_ignored_for_addressing(network):
    with_path = network.add("n1", b"payload", path="/records/W1.json")
    without = network.add("n1", b"payload")
    assert with_path == without
