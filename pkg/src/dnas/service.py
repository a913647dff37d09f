"""Consortium service layer: onboarding, record flows, and validation.

Every consortium member runs a blockchain service instance bound to its
chain account, vault, and store node. The consortium object owns the shared
infrastructure (one ledger, one private store network, the record database)
and routes receipts and contract events back to services; a pluggable
dispatcher lets the simulator defer those deliveries by one tick.
"""

import enum
import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Set, Tuple

from .content_store import ContentId, PrivateNetwork
from .contracts import ContractEvent, ROLE_PARTICIPANT, ROLE_WINEMAKER
from .encoding import canonical_json
from .errors import (
    AuthError,
    ContractError,
    DnasError,
    FlowError,
    NotFoundError,
    PayloadError,
    PoolError,
    RoutingError,
    SealError,
    TagLockedError,
    TagStateError,
)
from .keccak import keccak256
from .keys import (
    KeyPair,
    create_keystore,
    decrypt_keystore,
    generate_keypair,
    hash_identifier,
    keystore_from_json,
    keystore_to_json,
    sign_tag_payload,
)
from .ledger import Chain, GenesisConfig, Receipt, sign_transaction
from .records import RecordDatabase, WineRecord, WineStatus
from .tags import NfcTag
from .vault import Vault, VaultAuthMethod, secret_path


class MemberRole(enum.Enum):
    WINEMAKER = "winemaker"
    PARTICIPANT = "participant"
    ADMINISTRATOR = "administrator"

    @property
    def registry_role(self) -> str:
        return ROLE_WINEMAKER if self is MemberRole.WINEMAKER else ROLE_PARTICIPANT


class NodeType(enum.Enum):
    VALIDATOR = "validator"
    LISTENER = "listener"


class AttackClass(enum.Enum):
    MODIFICATION = "modification"
    CLONING = "cloning"
    REAPPLICATION = "reapplication"


class ValidationLayer(enum.Enum):
    OFF_CHAIN_DB = "off_chain_db"
    ON_CHAIN = "on_chain"
    CONTENT_STORE = "content_store"


@dataclass
class ValidationOutcome:
    layer: ValidationLayer
    result: object  # "pass" or AttackClass
    details: str = ""

    @property
    def passed(self) -> bool:
        return self.result == "pass"

    def to_dict(self) -> Dict[str, object]:
        result = self.result.value if isinstance(self.result, AttackClass) else self.result
        return {"layer": self.layer.value, "result": result, "details": self.details}


@dataclass
class ValidationSession:
    """Single-use pass token linking a full validation to one acceptance."""

    wine_id: str
    scanner: str
    tag_uid: str
    issued_at: int
    consumed: bool = False


@dataclass
class FlowReceipt:
    """Outcome of a staged flow; on-chain fields fill in once mined."""

    wine_id: str
    status: str = "pending"            # pending | ok | error
    stage: str = ""
    content_id: Optional[str] = None
    tx_hash: Optional[str] = None
    block_number: Optional[int] = None
    error: Optional[str] = None


@dataclass
class MemberInfo:
    member_id: str
    role: MemberRole
    node_type: NodeType
    key: KeyPair
    vault: Vault
    vault_session: str
    store_node_id: str
    keystore_password: str


class BlockchainService:
    """One member's blockchain service instance."""

    def __init__(self, consortium: "Consortium", info: MemberInfo):
        self.consortium = consortium
        self.member_id = info.member_id
        self.role = info.role
        self.node_type = info.node_type
        self.store_node_id = info.store_node_id
        self._vault = info.vault
        self._vault_session = info.vault_session
        # the node key is fetched through the vault and decrypted on demand
        stored = self._vault.get(self._vault_session,
                                 secret_path(info.member_id, "nodekey")).value
        self._key = decrypt_keystore(keystore_from_json(stored), info.keystore_password)
        self._sessions: Dict[str, ValidationSession] = {}
        self._seen_events: Set[Tuple[str, str, object]] = set()
        self._readout = None
        self.join_policy: Callable[[Dict[str, object]], bool] = lambda entry: True

    @property
    def address(self) -> str:
        return self._key.address.hex0x

    @property
    def chain(self) -> Chain:
        return self.consortium.chain

    # -- endpoint surface ----------------------------------------------------------

    def dispatch(self, endpoint: str, payload: Dict[str, object]) -> Dict[str, object]:
        handlers = {
            "/peer/validate": self._ep_peer_validate,
            "/peer/propose-add": self._ep_propose_add,
            "/peer/get": self._ep_peer_get,
            "/record/create": self._ep_record_create,
            "/record/validate": self._ep_record_validate,
            "/record/append": self._ep_record_append,
            "/admin/upgrade": self._ep_admin_upgrade,
            "/admin/consensus-level": self._ep_admin_consensus_level,
        }
        handler = handlers.get(endpoint)
        if handler is None:
            raise RoutingError(f"no endpoint {endpoint!r}")
        if not isinstance(payload, dict):
            raise PayloadError("payload must be an object")
        try:
            return handler(payload)
        except KeyError as exc:
            raise PayloadError(f"missing payload field {exc}") from exc

    def _ep_peer_validate(self, payload):
        return {"member": self.peer_validate(payload["address"])}

    def _ep_propose_add(self, payload):
        return self.vote_on_candidate(payload["entry"], payload.get("add", True))

    def _ep_peer_get(self, payload):
        return {"peers": self.get_peers()}

    def _ep_record_create(self, payload):
        receipt = self.create_record_flow(payload["record"], payload["tag"],
                                          payload["device_id"])
        return {"flow": receipt}

    def _ep_record_validate(self, payload):
        outcomes, view, session_id = self.validate_record_flow(payload["tag"])
        return {"outcomes": [o.to_dict() for o in outcomes], "record": view,
                "session_id": session_id}

    def _ep_record_append(self, payload):
        receipt = self.accept_record_flow(payload["tag"], payload["session_id"],
                                          payload.get("custodian_key", self._key),
                                          purchase=payload.get("purchase", False))
        return {"flow": receipt}

    def _ep_admin_upgrade(self, payload):
        return {"tx_hash": self.upgrade_contract(payload["version"])}

    def _ep_admin_consensus_level(self, payload):
        return {"tx_hash": self.set_consensus_level(payload["level"])}

    # -- peer operations ------------------------------------------------------------

    def peer_validate(self, address: str) -> bool:
        """True iff the address is in the on-chain registry white list."""
        return bool(self.chain.call_view("is_member", {"address": address}))

    def get_peers(self) -> List[Dict[str, object]]:
        # not role-restricted: listener nodes resolve this too
        return self.chain.call_view("get_peers", {})

    def vote_on_candidate(self, entry: Dict[str, object], add: bool) -> Dict[str, object]:
        """This member's vote on a registry admission or removal."""
        if not self.join_policy(entry):
            return {"voted": False, "reason": "declined by local policy"}
        try:
            tx_hash = self.submit_tx("registry", "propose_peer",
                                     {"entry": dict(entry), "add": add})
        except PoolError as exc:
            return {"voted": False, "reason": str(exc)}
        return {"voted": True, "tx_hash": tx_hash}

    def request_onboard(self, entry: Dict[str, object]) -> Dict[str, object]:
        """Candidate-side onboarding: read the registry, then ask every
        member's service to vote on the admission."""
        peers = self.get_peers()
        responses = {}
        for peer in peers:
            service = self.consortium.service_by_address(peer["address"])
            if service is None:
                continue
            responses[peer["member_id"]] = service.dispatch(
                "/peer/propose-add", {"entry": entry, "add": True})
        return {"contacted": len(responses), "responses": responses}

    # -- admin operations ------------------------------------------------------------

    def upgrade_contract(self, version: str) -> str:
        if self.role is not MemberRole.ADMINISTRATOR:
            raise AuthError("contract upgrades are an administrator operation")
        return self.submit_tx("proxy_admin", "upgrade_to", {"version": version})

    def set_consensus_level(self, level: int) -> str:
        if self.role is not MemberRole.ADMINISTRATOR:
            raise AuthError("the consensus level is an administrator operation")
        return self.submit_tx("registry", "set_consensus_level", {"level": level})

    def on_contract_event(self, event: ContractEvent) -> None:
        """Administrator's listener: registry admissions trigger the chain
        validator voting round. Duplicate deliveries are harmless."""
        if self.role is not MemberRole.ADMINISTRATOR:
            return
        key = (event.kind, event.tx_hash or "", canonical_json(event.fields))
        if key in self._seen_events:
            return
        self._seen_events.add(key)
        if event.kind == "PeerAdded":
            self._validator_round(event.fields["candidate"],
                                  event.fields.get("member_id", ""), add=True)
        elif event.kind == "PeerRemoved":
            self._validator_round(event.fields["candidate"],
                                  event.fields.get("member_id", ""), add=False)

    def _validator_round(self, candidate: str, member_id: str, add: bool) -> int:
        """Request a chain vote from every member's node; returns the number
        of requests issued."""
        info = self.consortium.members.get(member_id)
        if add and (info is None or info.node_type is not NodeType.VALIDATOR):
            return 0  # listener nodes never join the sealer set
        chain = self.chain
        if add and candidate in chain.validators:
            return 0
        if not add and candidate not in chain.validators:
            return 0
        requests = 0
        for voter_info in list(self.consortium.members.values()):
            voter = voter_info.key.address.hex0x
            if voter == candidate or voter_info.member_id in self.consortium.halted:
                continue
            if voter not in chain.validators:
                continue
            requests += 1
            try:
                chain.propose_validator(voter, candidate, add)
            except SealError:
                continue  # threshold already reached earlier in the round
        return requests

    # -- transactions -------------------------------------------------------------------

    def submit_tx(self, target: str, method: str, params: Dict[str, object],
                  on_receipt: Optional[Callable[[Receipt], None]] = None) -> str:
        tx = sign_transaction(self._key, self.chain.genesis.chain_id, target, method,
                              params, nonce=self.chain.next_nonce(self.address))
        tx_hash = self.chain.submit_transaction(tx)
        if on_receipt is not None:
            self.consortium.track_receipt(tx_hash, on_receipt)
        return tx_hash

    # -- record creation flow --------------------------------------------------------------

    def create_record_flow(self, record_fields: Dict[str, object], tag: NfcTag,
                           device_id: str) -> FlowReceipt:
        wine_id = record_fields["wine_id"]
        flow = FlowReceipt(wine_id=wine_id)

        # stage 1: confirm this node is part of the consortium
        flow.stage = "peer-validate"
        if not self.peer_validate(self.address):
            raise FlowError(flow.stage, f"{self.member_id} is not a consortium member")
        if self.role is not MemberRole.WINEMAKER:
            raise FlowError(flow.stage, "record creation is a winemaker operation")

        # stage 2: off-chain record
        flow.stage = "off-chain-create"
        record = WineRecord(wine_id=wine_id,
                            pedigree_data=dict(record_fields.get("pedigree_data", {})))
        try:
            self.consortium.db.create(self.role.registry_role, record)
        except DnasError as exc:
            raise FlowError(flow.stage, str(exc)) from exc

        # stage 3: sign identifiers, write the tag, lock it
        flow.stage = "tag-write"
        tag_id = tag.uid.hex()
        hashed_tag = hash_identifier(tag_id)
        hashed_device = hash_identifier(device_id)
        signature = sign_tag_payload(wine_id, hashed_tag, hashed_device, self._key)
        try:
            tag.write(wine_id, signature, write_counter=1)
            password = tag.enable_protection(randbytes=self.consortium.randbytes)
        except DnasError as exc:
            raise FlowError(flow.stage, str(exc)) from exc
        record.tag_uid = tag_id
        record.tag_password = password.hex()
        record.device_id = device_id
        record.custodian_address = self.address
        record.last_signature = signature.hex
        record.write_counter = 1
        record.read_counter = 0
        record.wine_status = WineStatus.CREATED
        self.consortium.db.append_supply_chain_entry(wine_id, {
            "event": "created", "holder": self.member_id,
            "at": self.consortium.now,
        })

        # stage 4: publish the subset and pin its content id
        flow.stage = "content-store"
        subset = record.subset()
        try:
            content_id = self.consortium.store.add(self.store_node_id, subset,
                                                   path=f"/records/{wine_id}.json")
            self.consortium.store.pin(self.store_node_id, content_id)
        except DnasError as exc:
            raise FlowError(flow.stage, str(exc)) from exc
        flow.content_id = content_id.text

        # stage 5: on-chain creation; bookkeeping completes on the receipt
        flow.stage = "on-chain-create"
        def finish(receipt: Receipt) -> None:
            if receipt.status == "ok":
                self._record_mined(flow, record.wine_id, receipt, "on-chain-created")
            else:
                flow.status, flow.error = "error", receipt.error
                self.consortium.db.update(ROLE_WINEMAKER, wine_id,
                                          {"wine_status": WineStatus.ERROR})
                self.consortium.notify({
                    "type": "creation_failed", "wine_id": wine_id,
                    "stage": flow.stage, "error": receipt.error,
                    "tag_reissue": tag.uid.hex(), "at": self.consortium.now,
                })
        flow.tx_hash = self.submit_tx("proxy", "create_wine_record", {
            "wine_id": wine_id,
            "wine_data_hash": content_id.text,
            "new_public_address": self.address,
            "tag_id": hashed_tag,
            "device_id": hashed_device,
        }, on_receipt=finish)
        return flow

    def _record_mined(self, flow: FlowReceipt, wine_id: str, receipt: Receipt,
                      event_name: str) -> None:
        # only transaction_data takes the mined tx details: the subset already
        # published for this iteration must stay reproducible from the record
        flow.status = "ok"
        flow.block_number = receipt.block_number
        self.consortium.db.append_transaction_entry(wine_id, {
            "event": event_name, "tx_hash": receipt.tx_hash,
            "block_number": receipt.block_number,
            "actor": self.address, "timestamp": self.consortium.now,
        })

    # -- three-layered validation flow -------------------------------------------------------

    def validate_record_flow(self, tag: NfcTag) -> Tuple[List[ValidationOutcome],
                                                         Optional[Dict[str, object]],
                                                         Optional[str]]:
        outcomes: List[ValidationOutcome] = []
        self._readout = None
        try:
            wine_id = tag.peek_wine_id()
        except TagStateError as exc:
            raise FlowError("tag-read", str(exc)) from exc

        failure = self._layer_off_chain(wine_id, tag, outcomes)
        readout = None
        if failure is None:
            readout = self._readout
            failure = self._layer_on_chain(wine_id, readout, outcomes)
        if failure is None:
            failure = self._layer_content_store(wine_id, outcomes)

        if failure is not None:
            attack, layer, details = failure
            if self.consortium.db.exists(wine_id):
                self.consortium.db.log_unsuccessful_validation(
                    wine_id, attack.value, layer.value, details,
                    timestamp=self.consortium.now)
            else:
                self.consortium.notify({
                    "type": "record_flagged", "wine_id": wine_id,
                    "attack_class": attack.value, "layer": layer.value,
                    "details": details, "at": self.consortium.now,
                })
            return outcomes, None, None

        # full pass: increment the read counters everywhere and mint a session
        record = self.consortium.db.get(wine_id)
        record.read_counter += 1
        self.submit_tx("proxy", "increment_read_count", {"wine_id": wine_id})
        session_id = f"session-{self.member_id}-{wine_id}-{self.consortium.next_session_serial()}"
        self._sessions[session_id] = ValidationSession(
            wine_id=wine_id, scanner=self.member_id, tag_uid=readout.tag_id,
            issued_at=self.consortium.now)
        latest_tx = record.transaction_data[-1] if record.transaction_data else {}
        view = {
            "wine_id": wine_id,
            "pedigree_data": dict(record.pedigree_data),
            "wine_status": record.wine_status.value,
            "tx_hash": latest_tx.get("tx_hash"),
            "block_number": latest_tx.get("block_number"),
            "write_counter": record.write_counter,
            "read_counter": record.read_counter,
        }
        return outcomes, view, session_id

    def _fail(self, outcomes, layer, attack, details):
        outcomes.append(ValidationOutcome(layer=layer, result=attack, details=details))
        return attack, layer, details

    def _layer_off_chain(self, wine_id, tag, outcomes):
        layer = ValidationLayer.OFF_CHAIN_DB
        try:
            record = self.consortium.db.get(wine_id)
        except NotFoundError:
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              "wine identifier not found in the database")
        try:
            readout = tag.read(password=bytes.fromhex(record.tag_password)
                               if record.tag_password else None)
        except TagLockedError:
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              "tag rejects the injected password")
        self._readout = readout
        if readout.tag_id != record.tag_uid:
            return self._fail(outcomes, layer, AttackClass.CLONING,
                              "inconsistent tag identifier")
        if readout.write_counter != record.write_counter:
            return self._fail(outcomes, layer, AttackClass.REAPPLICATION,
                              "write counter differs from the database")
        if readout.read_counter != record.read_counter + 1:
            return self._fail(outcomes, layer, AttackClass.REAPPLICATION,
                              "read counter differs from the database")
        if readout.wine_id != record.wine_id or readout.signature.hex != record.last_signature:
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              "wine identifier or signature differs from the database")
        outcomes.append(ValidationOutcome(layer=layer, result="pass"))
        return None

    def _layer_on_chain(self, wine_id, readout, outcomes):
        layer = ValidationLayer.ON_CHAIN
        try:
            on_chain = self.chain.call_view("get_record", {"wine_id": wine_id})
        except ContractError:
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              "wine identifier not found on-chain")
        if hash_identifier(readout.tag_id) != on_chain["tag_id"]:
            return self._fail(outcomes, layer, AttackClass.CLONING,
                              "inconsistent tag identifier on-chain")
        if readout.write_counter != on_chain["write_count"]:
            return self._fail(outcomes, layer, AttackClass.REAPPLICATION,
                              "write counter differs from on-chain state")
        if readout.read_counter != on_chain["read_count"] + 1:
            return self._fail(outcomes, layer, AttackClass.REAPPLICATION,
                              "read counter differs from on-chain state")
        sig = readout.signature
        valid = self.chain.call_view("validate_signature", {
            "wine_id": wine_id, "v": sig.v, "r": sig.r, "s": sig.s})
        if not valid:
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              "recovered public address does not match on-chain custodian")
        outcomes.append(ValidationOutcome(layer=layer, result="pass"))
        return None

    def _layer_content_store(self, wine_id, outcomes):
        layer = ValidationLayer.CONTENT_STORE
        record = self.consortium.db.get(wine_id)
        subset = record.subset()
        db_cid = ContentId.for_content(subset)
        on_chain = self.chain.call_view("get_record", {"wine_id": wine_id})
        if not self.chain.call_view("validate_wine_record_hash",
                                    {"wine_id": wine_id, "wine_data_hash": db_cid.text}):
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              "database subset hash differs from on-chain hash")
        try:
            fetched = self.consortium.store.get(self.store_node_id,
                                                ContentId(on_chain["data_hash_latest"]))
        except (NotFoundError, DnasError) as exc:
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              f"stored subset unavailable: {exc}")
        if fetched != subset:
            return self._fail(outcomes, layer, AttackClass.MODIFICATION,
                              "stored subset bytes differ from the database")
        outcomes.append(ValidationOutcome(layer=layer, result="pass"))
        return None

    # -- acceptance / appending flow -------------------------------------------------------

    def accept_record_flow(self, tag: NfcTag, session_id: str,
                           custodian_key: Optional[KeyPair] = None,
                           purchase: bool = False) -> FlowReceipt:
        session = self._sessions.get(session_id)
        if session is None or session.consumed:
            raise FlowError("session", "acceptance requires a fresh full-pass validation")
        timeout = self.consortium.session_timeout
        if timeout is not None and self.consortium.now - session.issued_at > timeout:
            raise FlowError("session", "validation session expired; re-validate first")
        session.consumed = True
        wine_id = session.wine_id
        custodian_key = custodian_key or self._key
        record = self.consortium.db.get(wine_id)
        flow = FlowReceipt(wine_id=wine_id)

        flow.stage = "acceptance"
        if record.wine_status is WineStatus.FLAGGED:
            raise FlowError(flow.stage, "flagged records cannot be accepted")
        if record.wine_status is WineStatus.ERROR:
            raise FlowError(flow.stage, "record is in an error state")

        # new custodian signs the identifier triple bound at creation
        flow.stage = "tag-write"
        hashed_tag = hash_identifier(record.tag_uid)
        hashed_device = hash_identifier(record.device_id)
        signature = sign_tag_payload(wine_id, hashed_tag, hashed_device, custodian_key)
        new_count = record.write_counter + 1
        tag.write(wine_id, signature, write_counter=new_count,
                  password=bytes.fromhex(record.tag_password) if record.tag_password else None)
        record.write_counter = new_count
        record.custodian_address = custodian_key.address.hex0x
        record.last_signature = signature.hex
        record.wine_status = WineStatus.SOLD if purchase else WineStatus.ACCEPTED
        self.consortium.db.append_supply_chain_entry(wine_id, {
            "event": "purchased" if purchase else "accepted",
            "holder": self.member_id if not purchase else f"consumer-via-{self.member_id}",
            "custodian": custodian_key.address.hex0x,
            "at": self.consortium.now,
        })

        flow.stage = "content-store"
        subset = record.subset()
        content_id = self.consortium.store.add(self.store_node_id, subset,
                                               path=f"/records/{wine_id}.json")
        self.consortium.store.pin(self.store_node_id, content_id)
        flow.content_id = content_id.text

        flow.stage = "on-chain-append"
        def finish(receipt: Receipt) -> None:
            if receipt.status == "ok":
                self._record_mined(flow, wine_id, receipt, "on-chain-appended")
            else:
                flow.status, flow.error = "error", receipt.error
                self.consortium.db.update(ROLE_WINEMAKER, wine_id,
                                          {"wine_status": WineStatus.ERROR})
        flow.tx_hash = self.submit_tx("proxy", "append_wine_record", {
            "wine_id": wine_id,
            "new_wine_data_hash": content_id.text,
            "new_public_address": custodian_key.address.hex0x,
            "tag_id": hashed_tag,
            "device_id": hashed_device,
        }, on_receipt=finish)
        return flow


class Consortium:
    """Shared infrastructure plus the directory of member services."""

    def __init__(self, chain_id: int = 77, period: int = 1, gas_limit: int = 8_000_000,
                 bootstrap_count: int = 5, seed: int = 0,
                 initial_members: Optional[List[Tuple[str, MemberRole, NodeType]]] = None,
                 dispatcher: Optional[Callable[..., None]] = None,
                 session_timeout: Optional[int] = None):
        self.session_timeout = session_timeout
        self.rng = random.Random(seed)
        self.now = 0
        self.period = period
        self.bootstrap_count = bootstrap_count
        self.dispatcher = dispatcher or (lambda fn, *args: fn(*args))
        self.members: Dict[str, MemberInfo] = {}
        self.services: Dict[str, BlockchainService] = {}
        self.consumers: Dict[str, KeyPair] = {}
        self.halted: Set[str] = set()
        self.notifications: List[Dict[str, object]] = []
        self._receipt_watchers: Dict[str, List[Callable[[Receipt], None]]] = {}
        self._session_serial = 0
        self._seed = seed

        members = initial_members or []
        admin_count = sum(1 for _, role, _ in members if role is MemberRole.ADMINISTRATOR)
        if admin_count != 1:
            raise DnasError("the consortium needs exactly one administrator")
        infos = [self._provision_member(member_id, role, node_type)
                 for member_id, role, node_type in members]
        admin_info = next(i for i in infos
                          if i.role is MemberRole.ADMINISTRATOR)
        self.admin_member_id = admin_info.member_id

        validators = tuple(i.key.address.hex0x for i in infos
                           if i.node_type is NodeType.VALIDATOR)
        genesis = GenesisConfig(
            chain_id=chain_id, period=period, initial_validators=validators,
            alloc={i.key.address.hex0x: 10**9 for i in infos}, gas_limit=gas_limit)
        self.chain = Chain(genesis, contract_admin=admin_info.key.address.hex0x,
                           bootstrap_count=bootstrap_count)
        self.store = PrivateNetwork(admin=self.admin_member_id)
        self.db = RecordDatabase(on_flagged=self._on_record_flagged)
        self.shared_store_node = "store-shared"

        for info in infos:
            self.store.add_member(self.admin_member_id, info.store_node_id)
        self.store.add_member(self.admin_member_id, self.shared_store_node)
        for info in infos:
            self.services[info.member_id] = BlockchainService(self, info)

        self._store_deployment_secret(admin_info)
        # registry bootstrap: the administrator inserts the initial members
        admin_service = self.services[self.admin_member_id]
        for info in infos:
            admin_service.submit_tx("registry", "bootstrap_add_peer",
                                    {"entry": self._entry_for(info)})
        self.run_until_idle()

    # -- provisioning -----------------------------------------------------------------

    def randbytes(self, n: int) -> bytes:
        return self.rng.randbytes(n)

    def _provision_member(self, member_id: str, role: MemberRole,
                          node_type: NodeType) -> MemberInfo:
        key_seed = keccak256(f"member:{self._seed}:{member_id}".encode())
        key = generate_keypair(key_seed)
        vault = Vault(clock=lambda: float(self.now),
                      token_source=lambda: self.rng.randbytes(16).hex())
        role_id, secret_id = vault.create_approle([f"dnas/{member_id}/"],
                                                  lease_seconds=10**9)
        session = vault.login(VaultAuthMethod.with_approle(role_id, secret_id))
        password = self.rng.randbytes(8).hex()
        keystore = create_keystore(key, password, rng=self.rng)
        vault.put(session, secret_path(member_id, "nodekey"), keystore_to_json(keystore))
        # the administrator hosts the shared store node consumers go through
        store_node = ("store-shared" if role is MemberRole.ADMINISTRATOR
                      else f"store-{member_id}")
        info = MemberInfo(member_id=member_id, role=role, node_type=node_type, key=key,
                          vault=vault, vault_session=session,
                          store_node_id=store_node,
                          keystore_password=password)
        self.members[member_id] = info
        return info

    def _store_deployment_secret(self, admin_info: MemberInfo) -> None:
        # contract addresses are synthesized deterministically from the owner
        def contract_address(name: str) -> str:
            return "0x" + keccak256(f"{admin_info.key.address.hex0x}:{name}".encode())[-20:].hex()
        proxy_address = contract_address("proxy")
        vault = admin_info.vault
        operator = vault.issue_token(["dnas"], lease_seconds=None)  # root-scoped
        vault.put(operator, f"dnas/{proxy_address}", {
            "kind": "SCDeploymentSecret",
            "proxy": proxy_address,
            "wine_data_contract": contract_address("winedata-v1"),
            "peer_registry_contract": contract_address("registry"),
            "owner": admin_info.key.address.hex0x,
        })
        self.deployment_secret_path = f"dnas/{proxy_address}"

    def _entry_for(self, info: MemberInfo) -> Dict[str, object]:
        return {
            "address": info.key.address.hex0x,
            "role": info.role.registry_role,
            "node_id": f"enode-{info.member_id}",
            "member_id": info.member_id,
            "joined_at": self.now,
        }

    # -- membership ------------------------------------------------------------------

    def service_by_address(self, address: str) -> Optional[BlockchainService]:
        for member_id, info in self.members.items():
            if info.key.address.hex0x == address:
                return self.services.get(member_id)
        return None

    def onboard_member(self, member_id: str, role: MemberRole,
                       node_type: NodeType) -> Dict[str, object]:
        """Full onboarding: provision components, then registry admission
        (administrator insert during bootstrap, democratic vote after)."""
        if member_id in self.members:
            raise DnasError(f"{member_id!r} is already a consortium member")
        info = self._provision_member(member_id, role, node_type)
        self.store.add_member(self.admin_member_id, info.store_node_id)
        service = BlockchainService(self, info)
        self.services[member_id] = service
        entry = self._entry_for(info)
        registry_size = len(self.chain.call_view("get_peers", {}))
        if registry_size < self.bootstrap_count:
            admin_service = self.services[self.admin_member_id]
            admin_service.submit_tx("registry", "bootstrap_add_peer", {"entry": entry})
            return {"member_id": member_id, "mode": "bootstrap"}
        result = service.request_onboard(entry)
        result.update({"member_id": member_id, "mode": "vote"})
        return result

    def propose_member_removal(self, proposer_id: str, member_id: str) -> Dict[str, object]:
        entry = self._entry_for(self.members[member_id])
        responses = {}
        for peer in self.services[proposer_id].get_peers():
            service = self.service_by_address(peer["address"])
            if service is None:
                continue
            responses[peer["member_id"]] = service.dispatch(
                "/peer/propose-add", {"entry": entry, "add": False})
        return {"responses": responses}

    def add_consumer(self, consumer_id: str) -> KeyPair:
        """Consumers hold their own keys but use the consortium-hosted shared
        service and store node."""
        key_seed = keccak256(f"consumer:{self._seed}:{consumer_id}".encode())
        key = generate_keypair(key_seed)
        self.consumers[consumer_id] = key
        return key

    @property
    def shared_service(self) -> BlockchainService:
        return self.services[self.admin_member_id]

    # -- receipts and events ------------------------------------------------------------

    def track_receipt(self, tx_hash: str, callback: Callable[[Receipt], None]) -> None:
        self._receipt_watchers.setdefault(tx_hash, []).append(callback)

    def notify(self, payload: Dict[str, object]) -> None:
        self.notifications.append(payload)

    def _on_record_flagged(self, record: WineRecord, entry: Dict[str, object]) -> None:
        self.notify({
            "type": "record_flagged", "wine_id": record.wine_id,
            "attack_class": entry["attack_class"], "layer": entry["layer"],
            "details": entry["details"], "at": self.now,
        })

    def _deliver_block_results(self, block) -> None:
        admin_service = self.services[self.admin_member_id]
        for tx in block.transactions:
            receipt = self.chain.receipts[tx.tx_hash]
            for callback in self._receipt_watchers.pop(tx.tx_hash, []):
                self.dispatcher(callback, receipt)
            for event in receipt.events:
                self.dispatcher(admin_service.on_contract_event, event)

    # -- block production ---------------------------------------------------------------

    def _halted_addresses(self) -> Set[str]:
        return {self.members[m].key.address.hex0x for m in self.halted
                if m in self.members}

    def seal_due(self, now: int) -> Optional[object]:
        """Seal a block if some live validator's turn window is open."""
        self.now = max(self.now, now)
        parent = self.chain.head
        halted = self._halted_addresses()
        n = len(self.chain.validators)
        for offset in range(n):
            if now < parent.timestamp + self.period * (offset + 1):
                break  # later offsets open even later
            sealer = self.chain.sealer_at_offset(offset)
            if sealer in halted:
                continue
            block = self.chain.seal_block(sealer, now)
            self._deliver_block_results(block)
            return block
        return None

    def run_until_idle(self, max_blocks: int = 64) -> None:
        """Advance simulated time and seal until no work remains; serves the
        synchronous (non-simulator) use of the consortium."""
        for _ in range(max_blocks):
            if not self.chain.pool and not self._receipt_watchers:
                return
            self.now = self.chain.head.timestamp + self.period
            # find the earliest live sealer window at most n periods out
            block = None
            attempts = 0
            while block is None and attempts < len(self.chain.validators) + 1:
                block = self.seal_due(self.now)
                if block is None:
                    self.now += self.period
                    attempts += 1
            if block is None:
                raise SealError("no live validator can seal")
        if self.chain.pool:
            raise SealError("pool did not drain within the block budget")

    def next_session_serial(self) -> int:
        self._session_serial += 1
        return self._session_serial

    # -- reporting ------------------------------------------------------------------------

    def counters_in_sync(self, wine_id: str, tag: NfcTag) -> bool:
        record = self.db.get(wine_id)
        on_chain = self.chain.call_view("get_record", {"wine_id": wine_id})
        return (tag.read_counter == record.read_counter == on_chain["read_count"]
                and tag.write_counter == record.write_counter == on_chain["write_count"])
