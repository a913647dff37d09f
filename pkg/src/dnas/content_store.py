"""Private content-addressed storage network.

Content identifiers are CIDv0-style multihashes: base58btc over
0x12 (sha2-256) || 0x20 (32) || sha256(content), always 46 characters and
starting with "Qm". Blocks replicate onto the reader's node on each fetch;
pinned blocks survive garbage collection; stored bytes are re-verified
against their identifier on every read.
"""

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Dict, Optional, Set

from .errors import AuthError, EncodingError, MembershipError, NotFoundError

BASE58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_BASE58_INDEX = {c: i for i, c in enumerate(BASE58_ALPHABET)}

MULTIHASH_SHA256 = 0x12
MULTIHASH_LEN32 = 0x20


def base58_encode(data: bytes) -> str:
    value = int.from_bytes(data, "big")
    digits = []
    while value:
        value, rem = divmod(value, 58)
        digits.append(BASE58_ALPHABET[rem])
    pad = 0
    for byte in data:
        if byte:
            break
        pad += 1
    return "1" * pad + "".join(reversed(digits))


def base58_decode(text: str) -> bytes:
    value = 0
    for char in text:
        try:
            value = value * 58 + _BASE58_INDEX[char]
        except KeyError:
            raise EncodingError(f"invalid base58 character {char!r}") from None
    pad = len(text) - len(text.lstrip("1"))
    body = value.to_bytes((value.bit_length() + 7) // 8, "big")
    return b"\x00" * pad + body


@dataclass(frozen=True)
class ContentId:
    """46-character base58 multihash naming one stored blob."""

    text: str

    def __post_init__(self):
        raw = base58_decode(self.text)
        if len(raw) != 34 or raw[0] != MULTIHASH_SHA256 or raw[1] != MULTIHASH_LEN32:
            raise EncodingError(f"not a sha2-256 multihash: {self.text!r}")
        if len(self.text) != 46 or not self.text.startswith("Q"):
            raise EncodingError(f"malformed content id: {self.text!r}")

    @classmethod
    def for_content(cls, content: bytes) -> "ContentId":
        digest = hashlib.sha256(content).digest()
        return cls(base58_encode(bytes([MULTIHASH_SHA256, MULTIHASH_LEN32]) + digest))

    @property
    def digest(self) -> bytes:
        return base58_decode(self.text)[2:]

    def __str__(self) -> str:
        return self.text


@dataclass
class StoreNode:
    """One storage node: verified blocks, pin set, and known peers."""

    node_id: str
    blocks: Dict[str, bytes] = field(default_factory=dict)
    pins: Set[str] = field(default_factory=set)
    peers: Set[str] = field(default_factory=set)

    def store(self, content_id: ContentId, content: bytes) -> None:
        if ContentId.for_content(content) != content_id:
            raise EncodingError("content does not match its identifier")
        self.blocks[content_id.text] = content

    def holds(self, content_id: ContentId) -> bool:
        return content_id.text in self.blocks


class PrivateNetwork:
    """Membership-gated storage network with a shared lookup index."""

    def __init__(self, admin: str):
        self.admin = admin
        self._nodes: Dict[str, StoreNode] = {}
        self._index: Dict[str, Set[str]] = {}
        self._lock = threading.RLock()

    # -- membership -------------------------------------------------------------

    def add_member(self, caller: str, node_id: str) -> StoreNode:
        with self._lock:
            if caller != self.admin:
                raise AuthError("only the network administrator manages membership")
            if node_id in self._nodes:
                return self._nodes[node_id]
            node = StoreNode(node_id=node_id)
            for other in self._nodes.values():
                other.peers.add(node_id)
                node.peers.add(other.node_id)
            self._nodes[node_id] = node
            return node

    def remove_member(self, caller: str, node_id: str) -> None:
        with self._lock:
            if caller != self.admin:
                raise AuthError("only the network administrator manages membership")
            node = self._nodes.pop(node_id, None)
            if node is None:
                raise NotFoundError(f"{node_id!r} is not a member")
            for other in self._nodes.values():
                other.peers.discard(node_id)
            for cid in list(node.blocks):
                holders = self._index.get(cid)
                if holders is not None:
                    holders.discard(node_id)
                    if not holders:
                        del self._index[cid]

    def members(self) -> Set[str]:
        with self._lock:
            return set(self._nodes)

    def _member(self, node_id: str) -> StoreNode:
        node = self._nodes.get(node_id)
        if node is None:
            raise MembershipError(f"{node_id!r} is not a member of the private network")
        return node

    # -- block operations ---------------------------------------------------------

    def add(self, node_id: str, content: bytes, path: Optional[str] = None) -> ContentId:
        """Store content on the node and register it; the path is accepted
        for interface parity but does not affect addressing."""
        with self._lock:
            node = self._member(node_id)
            content_id = ContentId.for_content(content)
            node.store(content_id, content)
            self._index.setdefault(content_id.text, set()).add(node_id)
            return content_id

    def get(self, node_id: str, content_id: ContentId) -> bytes:
        """Fetch a block; a verified copy is cached on the requesting node."""
        with self._lock:
            node = self._member(node_id)
            local = node.blocks.get(content_id.text)
            if local is not None and ContentId.for_content(local) == content_id:
                return local
            for holder_id in sorted(self._index.get(content_id.text, ())):
                holder = self._nodes.get(holder_id)
                if holder is None:
                    continue
                content = holder.blocks.get(content_id.text)
                if content is None or ContentId.for_content(content) != content_id:
                    continue  # tampered or vanished copy: never returned
                node.store(content_id, content)
                self._index[content_id.text].add(node_id)
                return content
            raise NotFoundError(f"no member holds {content_id.text}")

    def pin(self, node_id: str, content_id: ContentId) -> None:
        with self._lock:
            node = self._member(node_id)
            if not node.holds(content_id):
                self.get(node_id, content_id)
            node.pins.add(content_id.text)

    def unpin(self, node_id: str, content_id: ContentId) -> None:
        with self._lock:
            self._member(node_id).pins.discard(content_id.text)

    def gc(self, node_id: str) -> int:
        """Evict unpinned cached blocks from the node; returns eviction count."""
        with self._lock:
            node = self._member(node_id)
            evicted = 0
            for cid in list(node.blocks):
                if cid not in node.pins:
                    del node.blocks[cid]
                    holders = self._index.get(cid)
                    if holders is not None:
                        holders.discard(node_id)
                        if not holders:
                            del self._index[cid]
                    evicted += 1
            return evicted

    def holders(self, content_id: ContentId) -> Set[str]:
        with self._lock:
            return set(self._index.get(content_id.text, ()))
