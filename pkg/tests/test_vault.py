import threading

import pytest

from dnas.errors import AuthError, NotFoundError
from dnas.vault import AuthKind, Vault, VaultAuthMethod, secret_path


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def vault(clock):
    return Vault(clock=clock)


def test_approle_login_mints_leased_token(vault, clock):
    role_id, secret_id = vault.create_approle(["dnas/member1/"], lease_seconds=60)
    token = vault.login(VaultAuthMethod.with_approle(role_id, secret_id))
    assert vault.token_lease_remaining(token) == 60


def test_expired_token_rejected(vault, clock):
    role_id, secret_id = vault.create_approle(["dnas/member1/"], lease_seconds=60)
    token = vault.login(VaultAuthMethod.with_approle(role_id, secret_id))
    clock.now = 61
    with pytest.raises(AuthError):
        vault.get(token, "dnas/member1/nodekey")
    with pytest.raises(AuthError):
        vault.login(VaultAuthMethod.with_token(token))


def test_reauthentication_after_lease(vault, clock):
    role_id, secret_id = vault.create_approle(["dnas/member1/"], lease_seconds=60)
    token = vault.login(VaultAuthMethod.with_approle(role_id, secret_id))
    vault.put(token, "dnas/member1/nodekey", "k1")
    clock.now = 100
    fresh = vault.login(VaultAuthMethod.with_approle(role_id, secret_id))
    assert fresh != token
    assert vault.get(fresh, "dnas/member1/nodekey").value == "k1"


def test_wrong_secret_id(vault):
    role_id, _ = vault.create_approle(["dnas/member1/"])
    with pytest.raises(AuthError):
        vault.login(VaultAuthMethod.with_approle(role_id, "nope"))


def test_unknown_role_id(vault):
    with pytest.raises(AuthError):
        vault.login(VaultAuthMethod.with_approle("ghost", "nope"))


def test_token_login_echoes_token(vault):
    token = vault.issue_token(["dnas/"], lease_seconds=None)
    assert vault.login(VaultAuthMethod.with_token(token)) == token


def test_put_get_versioning(vault):
    token = vault.issue_token(["dnas/member42/"])
    assert vault.put(token, "dnas/member42/nodekey", b"k") == 1
    assert vault.get(token, "dnas/member42/nodekey").value == b"k"
    assert vault.put(token, "dnas/member42/nodekey", b"k2") == 2
    got = vault.get(token, "dnas/member42/nodekey")
    assert (got.value, got.version) == (b"k2", 2)
    pinned = vault.get(token, "dnas/member42/nodekey", version=1)
    assert pinned.value == b"k"


def test_get_unknown_key(vault):
    token = vault.issue_token(["dnas/"])
    with pytest.raises(NotFoundError):
        vault.get(token, "dnas/member42/missing")


def test_policy_matrix_over_member_prefixes(vault):
    # every member's token may touch exactly its own prefix
    members = [f"member{i}" for i in range(5)]
    tokens = {}
    for m in members:
        role_id, secret_id = vault.create_approle([f"dnas/{m}/"])
        tokens[m] = vault.login(VaultAuthMethod.with_approle(role_id, secret_id))
        vault.put(tokens[m], secret_path(m, "nodekey"), f"key-of-{m}")
    for owner in members:
        for target in members:
            if owner == target:
                assert vault.get(tokens[owner], secret_path(target, "nodekey")).value == f"key-of-{target}"
            else:
                with pytest.raises(AuthError):
                    vault.get(tokens[owner], secret_path(target, "nodekey"))


def test_prefix_must_match_segment_boundary(vault):
    token = vault.issue_token(["dnas/member1/"])
    with pytest.raises(AuthError):
        vault.put(token, "dnas/member10/nodekey", "sneaky")


def test_versions_strictly_monotone_under_threads(vault):
    token = vault.issue_token(["dnas/shared/"])
    seen = []

    def writer():
        for _ in range(50):
            seen.append(vault.put(token, "dnas/shared/counter", "x"))

    threads = [threading.Thread(target=writer) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(seen) == list(range(1, 201))
    assert vault.get(token, "dnas/shared/counter").version == 200


def test_auth_method_constructors():
    token_method = VaultAuthMethod.with_token("t")
    assert token_method.kind is AuthKind.TOKEN
    approle = VaultAuthMethod.with_approle("r", "s")
    assert approle.kind is AuthKind.APPROLE
