"""Independent ECDSA reference used only as a test oracle.

Naive affine arithmetic, straight out of the textbook definitions, and a
from-the-RFC rewrite of the 6979 nonce derivation. Shares no code with the
package implementation; byte-for-byte agreement between the two is what the
signature tests assert.
"""

import hashlib
import hmac

P = 2**256 - 2**32 - 977
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
G = (
    0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
)


def point_add(p, q):
    if p is None:
        return q
    if q is None:
        return p
    if p[0] == q[0] and (p[1] + q[1]) % P == 0:
        return None
    if p == q:
        lam = 3 * p[0] * p[0] * pow(2 * p[1], P - 2, P) % P
    else:
        lam = (q[1] - p[1]) * pow(q[0] - p[0], P - 2, P) % P
    x = (lam * lam - p[0] - q[0]) % P
    return x, (lam * (p[0] - x) - p[1]) % P


def point_mul(k, pt):
    acc = None
    while k:
        if k & 1:
            acc = point_add(acc, pt)
        pt = point_add(pt, pt)
        k >>= 1
    return acc


def deterministic_nonce(secret, digest):
    """RFC 6979 section 3.2, HMAC-SHA256, rewritten from the RFC text."""
    h1 = int.from_bytes(digest, "big") % N
    key_and_msg = secret.to_bytes(32, "big") + h1.to_bytes(32, "big")
    v_state = b"\x01" * 32
    k_state = b"\x00" * 32
    k_state = hmac.new(k_state, v_state + b"\x00" + key_and_msg, hashlib.sha256).digest()
    v_state = hmac.new(k_state, v_state, hashlib.sha256).digest()
    k_state = hmac.new(k_state, v_state + b"\x01" + key_and_msg, hashlib.sha256).digest()
    v_state = hmac.new(k_state, v_state, hashlib.sha256).digest()
    while True:
        v_state = hmac.new(k_state, v_state, hashlib.sha256).digest()
        candidate = int.from_bytes(v_state, "big")
        if 1 <= candidate < N:
            yield candidate
        k_state = hmac.new(k_state, v_state + b"\x00", hashlib.sha256).digest()
        v_state = hmac.new(k_state, v_state, hashlib.sha256).digest()


def sign(secret, digest):
    """Canonical low-s signature (v, r, s) with v in {27, 28}."""
    z = int.from_bytes(digest, "big")
    for k in deterministic_nonce(secret, digest):
        rx, ry = point_mul(k, G)
        if rx >= N or rx == 0:
            continue
        s = pow(k, N - 2, N) * (z + rx * secret) % N
        if s == 0:
            continue
        parity = ry & 1
        if s > N // 2:
            s = N - s
            parity ^= 1
        return 27 + parity, rx, s


def recover(digest, v, r, s):
    """Returns the signer point or None."""
    if v >= 27:
        v -= 27
    y_sq = (r * r * r + 7) % P
    y = pow(y_sq, (P + 1) // 4, P)
    if y * y % P != y_sq:
        return None
    if y & 1 != v:
        y = P - y
    z = int.from_bytes(digest, "big")
    rinv = pow(r, N - 2, N)
    return point_add(point_mul(-z * rinv % N, G), point_mul(s * rinv % N, (r, y)))
