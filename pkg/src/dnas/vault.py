"""In-process secrets vault with token and approle authentication.

Models the contract of an external vault product: leased tokens, approle
login constraints, path-prefix policies, and versioned secrets. Reads are
safe under concurrency; writes are serialized per vault.
"""

import enum
import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .errors import AuthError, NotFoundError

VAULT_PREFIX_KEY = "dnas"


class AuthKind(enum.Enum):
    TOKEN = "token"
    APPROLE = "approle"


@dataclass(frozen=True)
class VaultAuthMethod:
    """Credentials presented at login: a leased token or an approle pair."""

    kind: AuthKind
    token: Optional[str] = None
    role_id: Optional[str] = None
    secret_id: Optional[str] = None

    @classmethod
    def with_token(cls, token: str) -> "VaultAuthMethod":
        return cls(kind=AuthKind.TOKEN, token=token)

    @classmethod
    def with_approle(cls, role_id: str, secret_id: str) -> "VaultAuthMethod":
        return cls(kind=AuthKind.APPROLE, role_id=role_id, secret_id=secret_id)


@dataclass(frozen=True)
class VaultSecret:
    key: str
    value: object
    version: int


@dataclass
class _TokenRecord:
    policies: Tuple[str, ...]
    lease_expiry: Optional[float]  # None: never expires (root tokens)


@dataclass
class _AppRole:
    secret_id: str
    policies: Tuple[str, ...]
    lease_seconds: float


def secret_path(member_id: str, name: str, prefix: str = VAULT_PREFIX_KEY) -> str:
    """Conventional secret layout: <prefix>/<memberID>/<name>."""
    return f"{prefix}/{member_id}/{name}"


class Vault:
    """Versioned secret store guarded by leased sessions."""

    def __init__(self, clock: Callable[[], float] = time.monotonic,
                 token_source: Optional[Callable[[], str]] = None):
        self._clock = clock
        self._new_token = token_source or (lambda: secrets.token_hex(16))
        self._lock = threading.RLock()
        self._tokens: Dict[str, _TokenRecord] = {}
        self._approles: Dict[str, _AppRole] = {}
        self._secrets: Dict[str, List[Tuple[int, object]]] = {}

    # -- provisioning (vault operator surface) --------------------------------

    def issue_token(self, policies: List[str], lease_seconds: Optional[float] = None) -> str:
        with self._lock:
            token = self._new_token()
            expiry = self._clock() + lease_seconds if lease_seconds is not None else None
            self._tokens[token] = _TokenRecord(tuple(policies), expiry)
            return token

    def create_approle(self, policies: List[str], lease_seconds: float = 3600.0) -> Tuple[str, str]:
        """Registers an approle; returns the (role_id, secret_id) pair."""
        with self._lock:
            role_id = self._new_token()
            secret_id = self._new_token()
            self._approles[role_id] = _AppRole(secret_id, tuple(policies), lease_seconds)
            return role_id, secret_id

    # -- client surface --------------------------------------------------------

    def login(self, method: VaultAuthMethod) -> str:
        """Validates credentials; returns a session token with a live lease."""
        with self._lock:
            if method.kind is AuthKind.TOKEN:
                if method.token is None:
                    raise AuthError("token login without a token")
                self._require_live(method.token)
                return method.token
            if method.role_id is None or method.secret_id is None:
                raise AuthError("approle login needs role_id and secret_id")
            role = self._approles.get(method.role_id)
            if role is None:
                raise AuthError("unknown role_id")
            if role.secret_id != method.secret_id:
                raise AuthError("secret_id mismatch")
            return self.issue_token(list(role.policies), role.lease_seconds)

    def put(self, session: str, key: str, value: object) -> int:
        with self._lock:
            self._authorize(session, key)
            versions = self._secrets.setdefault(key, [])
            version = versions[-1][0] + 1 if versions else 1
            versions.append((version, value))
            return version

    def get(self, session: str, key: str, version: Optional[int] = None) -> VaultSecret:
        with self._lock:
            self._authorize(session, key)
            versions = self._secrets.get(key)
            if not versions:
                raise NotFoundError(f"no secret at {key!r}")
            if version is None:
                number, value = versions[-1]
            else:
                for number, value in versions:
                    if number == version:
                        break
                else:
                    raise NotFoundError(f"no version {version} at {key!r}")
            return VaultSecret(key=key, value=value, version=number)

    def token_lease_remaining(self, token: str) -> Optional[float]:
        with self._lock:
            record = self._require_live(token)
            if record.lease_expiry is None:
                return None
            return record.lease_expiry - self._clock()

    # -- internals --------------------------------------------------------------

    def _require_live(self, token: str) -> _TokenRecord:
        record = self._tokens.get(token)
        if record is None:
            raise AuthError("unknown token")
        if record.lease_expiry is not None and self._clock() >= record.lease_expiry:
            raise AuthError("token lease expired; reauthentication needed")
        return record

    def _authorize(self, session: str, key: str) -> None:
        record = self._require_live(session)
        for prefix in record.policies:
            if key == prefix or key.startswith(prefix.rstrip("/") + "/"):
                return
        raise AuthError(f"token policies do not cover {key!r}")
