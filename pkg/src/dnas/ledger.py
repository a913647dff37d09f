"""Proof-of-authority chain with a rotating sealer set.

Blocks are sealed every period by the in-turn validator (round-robin over
the validator list, with a grace-delayed skip rule for halted sealers).
Validator membership changes through distinct-voter proposals that pass at
floor(N/2)+1; the votes ride block headers so replicas replaying the block
sequence reproduce the same validator set and state root. Gas is free
(price 0) but the per-block gas limit follows the dynamic rule driven by
parent usage.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from .contracts import ContractEvent, ContractRuntime
from .encoding import canonical_json_bytes
from .errors import (
    ConfigError,
    DnasError,
    NotFoundError,
    PoolError,
    RecoveryError,
    SealError,
)
from .keys import KeyPair, Signature, recover_signer

TX_GAS = 21_000
GAS_LIMIT_FLOOR = 5_000
GAS_BOUND_DIVISOR = 1024

_ZERO_HASH = "0x" + "00" * 32
_ZERO_ADDR = "0x" + "00" * 20


def next_gas_limit(parent_gas_limit: int, parent_gas_used: int,
                   floor: int = GAS_LIMIT_FLOOR) -> int:
    """Raise the limit when the parent used more than 2/3 of its budget,
    lower it otherwise; either way move at most parent/1024 and never go
    below the floor."""
    if parent_gas_limit <= 0 or parent_gas_used < 0:
        raise ConfigError("gas inputs must be positive")
    target = (parent_gas_used * 3 + 1) // 2  # ceil(used * 3/2)
    step = parent_gas_limit // GAS_BOUND_DIVISOR
    delta = max(-step, min(step, target - parent_gas_limit))
    return max(floor, parent_gas_limit + delta)


@dataclass(frozen=True)
class GenesisConfig:
    chain_id: int
    period: int
    initial_validators: Tuple[str, ...]
    alloc: Dict[str, int] = field(default_factory=dict)  # address -> gwei
    gas_limit: int = 8_000_000
    min_gas_limit: int = GAS_LIMIT_FLOOR

    def validate(self) -> None:
        if not self.initial_validators:
            raise ConfigError("genesis needs at least one validator")
        if self.period < 1:
            raise ConfigError("block period must be at least 1")
        if self.gas_limit < self.min_gas_limit:
            raise ConfigError("genesis gas limit below the configured floor")

    def to_json(self) -> str:
        return json.dumps({
            "chainId": self.chain_id,
            "period": self.period,
            "extraData": list(self.initial_validators),
            "alloc": dict(self.alloc),
            "gasLimit": self.gas_limit,
            "minGasLimit": self.min_gas_limit,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GenesisConfig":
        raw = json.loads(text)
        return cls(
            chain_id=raw["chainId"],
            period=raw["period"],
            initial_validators=tuple(raw["extraData"]),
            alloc=dict(raw.get("alloc", {})),
            gas_limit=raw.get("gasLimit", 8_000_000),
            min_gas_limit=raw.get("minGasLimit", GAS_LIMIT_FLOOR),
        )


@dataclass(frozen=True)
class SignedTransaction:
    sender: str
    target: str
    method: str
    params: Dict[str, object]
    nonce: int
    chain_id: int
    signature: Signature
    gas_price: int = 0

    @staticmethod
    def signing_digest(sender: str, target: str, method: str, params: Dict[str, object],
                       nonce: int, chain_id: int, gas_price: int = 0) -> bytes:
        unsigned = canonical_json_bytes({
            "sender": sender, "target": target, "method": method, "params": params,
            "nonce": nonce, "chain_id": chain_id, "gas_price": gas_price,
        })
        return hashlib.sha256(unsigned).digest()

    @property
    def digest(self) -> bytes:
        return self.signing_digest(self.sender, self.target, self.method, self.params,
                                   self.nonce, self.chain_id, self.gas_price)

    @property
    def tx_hash(self) -> str:
        return "0x" + hashlib.sha256(self.digest + self.signature.to_bytes()).hexdigest()

    def to_dict(self) -> Dict[str, object]:
        return {
            "sender": self.sender, "target": self.target, "method": self.method,
            "params": self.params, "nonce": self.nonce, "chain_id": self.chain_id,
            "gas_price": self.gas_price, "signature": self.signature.hex,
            "tx_hash": self.tx_hash,
        }


def sign_transaction(key: KeyPair, chain_id: int, target: str, method: str,
                     params: Dict[str, object], nonce: int) -> SignedTransaction:
    from . import secp256k1
    digest = SignedTransaction.signing_digest(key.address.hex0x, target, method,
                                              params, nonce, chain_id)
    v, r, s = secp256k1.sign_digest(key.secret, digest)
    return SignedTransaction(sender=key.address.hex0x, target=target, method=method,
                             params=params, nonce=nonce, chain_id=chain_id,
                             signature=Signature(v=v, r=r, s=s))


@dataclass
class Receipt:
    tx_hash: str
    block_number: int
    status: str                       # "ok" | "error"
    error: Optional[str] = None
    result: Optional[object] = None
    events: List[ContractEvent] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "tx_hash": self.tx_hash, "block_number": self.block_number,
            "status": self.status, "error": self.error, "result": self.result,
            "events": [{"kind": e.kind, "fields": e.fields, "block_number": e.block_number,
                        "tx_hash": e.tx_hash} for e in self.events],
        }


@dataclass
class Block:
    number: int
    parent_hash: str
    sealer: str
    timestamp: int
    gas_limit: int
    gas_used: int
    transactions: List[SignedTransaction]
    state_root: str
    votes: List[Dict[str, object]] = field(default_factory=list)

    @property
    def hash(self) -> str:
        header = canonical_json_bytes({
            "number": self.number, "parent_hash": self.parent_hash, "sealer": self.sealer,
            "timestamp": self.timestamp, "gas_limit": self.gas_limit,
            "gas_used": self.gas_used, "state_root": self.state_root,
            "votes": self.votes, "tx_hashes": [t.tx_hash for t in self.transactions],
        })
        return "0x" + hashlib.sha256(header).hexdigest()

    def to_dict(self) -> Dict[str, object]:
        return {
            "number": self.number, "hash": self.hash, "parent_hash": self.parent_hash,
            "sealer": self.sealer, "timestamp": self.timestamp,
            "gas_limit": self.gas_limit, "gas_used": self.gas_used,
            "state_root": self.state_root, "votes": self.votes,
            "transactions": [t.to_dict() for t in self.transactions],
        }


class Chain:
    """One node's view of the ledger; authoritative when it seals, replica
    when it applies blocks produced elsewhere."""

    def __init__(self, genesis: GenesisConfig, contract_admin: str,
                 bootstrap_count: int = 5):
        genesis.validate()
        self.genesis = genesis
        self.runtime = ContractRuntime(admin=contract_admin, bootstrap_count=bootstrap_count)
        self.validators: List[str] = list(genesis.initial_validators)
        self.tallies: Dict[Tuple[str, str], Set[str]] = {}
        self.balances: Dict[str, int] = dict(genesis.alloc)
        self.nonces: Dict[str, int] = {}
        self.pool: List[SignedTransaction] = []
        self._pool_hashes: Set[str] = set()
        self.receipts: Dict[str, Receipt] = {}
        self._pending_votes: List[Dict[str, object]] = []
        genesis_block = Block(
            number=0, parent_hash=_ZERO_HASH, sealer=_ZERO_ADDR, timestamp=0,
            gas_limit=genesis.gas_limit, gas_used=0, transactions=[],
            state_root=self._state_root(),
        )
        self.blocks: List[Block] = [genesis_block]
        self._blocks_by_hash: Dict[str, Block] = {genesis_block.hash: genesis_block}

    # -- state ---------------------------------------------------------------------

    def _state_root(self) -> str:
        return "0x" + hashlib.sha256(self.runtime.state_bytes()).hexdigest()

    @property
    def height(self) -> int:
        return self.blocks[-1].number

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def balance(self, address: str) -> int:
        return self.balances.get(address, 0)

    def account_nonce(self, address: str) -> int:
        return self.nonces.get(address, 0)

    def next_nonce(self, address: str) -> int:
        """Account nonce plus the sender's transactions already pooled."""
        pending = sum(1 for tx in self.pool if tx.sender == address)
        return self.account_nonce(address) + pending

    # -- pool -----------------------------------------------------------------------

    def submit_transaction(self, tx: SignedTransaction) -> str:
        if tx.gas_price != 0:
            raise PoolError("gas price is fixed at zero on this network")
        if tx.chain_id != self.genesis.chain_id:
            raise PoolError(f"wrong chain id {tx.chain_id}")
        if tx.tx_hash in self._pool_hashes or tx.tx_hash in self.receipts:
            raise PoolError("duplicate transaction")
        try:
            recovered = recover_signer(tx.digest, tx.signature)
        except RecoveryError as exc:
            raise PoolError(f"invalid signature: {exc}") from exc
        if recovered.hex0x != tx.sender:
            raise PoolError("signature does not recover to the sender")
        expected = self.next_nonce(tx.sender)
        if tx.nonce != expected:
            raise PoolError(f"nonce {tx.nonce} out of order; expected {expected}")
        self.pool.append(tx)
        self._pool_hashes.add(tx.tx_hash)
        return tx.tx_hash

    # -- validator voting (node-level operation, carried in headers) -----------------

    def propose_validator(self, voter: str, candidate: str, add: bool) -> Dict[str, object]:
        record = {"voter": voter, "candidate": candidate, "add": add}
        result = self._apply_vote(record)
        self._pending_votes.append(record)
        return result

    def _apply_vote(self, record: Dict[str, object]) -> Dict[str, object]:
        voter, candidate, add = record["voter"], record["candidate"], record["add"]
        if voter not in self.validators:
            raise SealError("only current validators may vote on the sealer set")
        if add and candidate in self.validators:
            raise SealError(f"{candidate} is already a validator")
        if not add and candidate not in self.validators:
            raise SealError(f"{candidate} is not a validator")
        key = (candidate, "add" if add else "remove")
        voters = self.tallies.setdefault(key, set())
        voters.add(voter)
        tally = len(voters)
        threshold = len(self.validators) // 2 + 1
        applied = False
        if tally >= threshold:
            if add:
                self.validators.append(candidate)
            else:
                self.validators.remove(candidate)
            self.tallies.pop((candidate, "add"), None)
            self.tallies.pop((candidate, "remove"), None)
            applied = True
        return {"tally": tally, "required": threshold, "applied": applied}

    # -- sealing ---------------------------------------------------------------------

    def sealer_at_offset(self, offset: int = 0) -> str:
        n = len(self.validators)
        return self.validators[(self.head.number % n + offset) % n]

    def _check_seal_schedule(self, sealer: str, timestamp: int, parent: Block) -> None:
        if sealer not in self.validators:
            raise SealError(f"{sealer} is not a validator")
        n = len(self.validators)
        offset = (self.validators.index(sealer) - parent.number % n) % n
        # each rotation position waits one extra grace period
        earliest = parent.timestamp + self.genesis.period * (offset + 1)
        if timestamp < earliest:
            raise SealError(
                f"sealer at rotation offset {offset} may not seal before t={earliest}")

    def seal_block(self, sealer: str, timestamp: int) -> Block:
        parent = self.head
        self._check_seal_schedule(sealer, timestamp, parent)
        gas_limit = next_gas_limit(parent.gas_limit, parent.gas_used,
                                   self.genesis.min_gas_limit)
        included: List[SignedTransaction] = []
        gas_used = 0
        while self.pool and gas_used + TX_GAS <= gas_limit:
            tx = self.pool.pop(0)
            self._pool_hashes.discard(tx.tx_hash)
            included.append(tx)
            gas_used += TX_GAS
        block = Block(
            number=parent.number + 1, parent_hash=parent.hash, sealer=sealer,
            timestamp=timestamp, gas_limit=gas_limit, gas_used=gas_used,
            transactions=included, state_root="",
            votes=self._pending_votes,
        )
        self._pending_votes = []
        self._execute_block(block)
        block.state_root = self._state_root()
        self.blocks.append(block)
        self._blocks_by_hash[block.hash] = block
        return block

    def _execute_block(self, block: Block) -> None:
        for tx in block.transactions:
            self.nonces[tx.sender] = self.nonces.get(tx.sender, 0) + 1
            try:
                result, events = self.runtime.execute(tx.sender, tx.target, tx.method,
                                                      tx.params)
                receipt = Receipt(tx_hash=tx.tx_hash, block_number=block.number,
                                  status="ok", result=result, events=events)
            except DnasError as exc:
                receipt = Receipt(tx_hash=tx.tx_hash, block_number=block.number,
                                  status="error", error=str(exc))
            for event in receipt.events:
                event.block_number = block.number
                event.tx_hash = tx.tx_hash
            self.receipts[tx.tx_hash] = receipt

    def apply_block(self, block: Block) -> None:
        """Replay a block sealed elsewhere; verifies linkage, schedule, gas
        rule, and the resulting state root."""
        parent = self.head
        if block.number != parent.number + 1:
            raise SealError(f"expected height {parent.number + 1}, got {block.number}")
        if block.parent_hash != parent.hash:
            raise SealError("parent hash does not match the local head")
        for vote in block.votes:
            try:
                self._apply_vote(dict(vote))
            except SealError:
                pass  # votes that were rejected upstream stay rejected
        self._check_seal_schedule(block.sealer, block.timestamp, parent)
        expected_limit = next_gas_limit(parent.gas_limit, parent.gas_used,
                                        self.genesis.min_gas_limit)
        if block.gas_limit != expected_limit:
            raise SealError("block gas limit violates the adjustment rule")
        self._execute_block(block)
        if block.state_root != self._state_root():
            raise SealError("replayed state root differs from the sealed block")
        self.blocks.append(block)
        self._blocks_by_hash[block.hash] = block

    # -- queries -----------------------------------------------------------------------

    def query_block(self, height: int) -> Block:
        if 0 <= height < len(self.blocks):
            return self.blocks[height]
        raise NotFoundError(f"no block at height {height}")

    def query_block_by_hash(self, block_hash: str) -> Block:
        block = self._blocks_by_hash.get(block_hash)
        if block is None:
            raise NotFoundError(f"no block {block_hash}")
        return block

    def query_tx(self, tx_hash: str) -> Receipt:
        receipt = self.receipts.get(tx_hash)
        if receipt is None:
            raise NotFoundError(f"no transaction {tx_hash}")
        return receipt

    def call_view(self, method: str, params: Dict[str, object]) -> object:
        return self.runtime.call_view(method, params)
