"""
Hash and MAC primitives.

H is SHA-256. The keyed MAC is built here from H rather than taken from a
library so the construction itself is testable against independent oracles:

    hmac(K, m) = H((K' ^ opad) || H((K' ^ ipad) || m))

where K' is derive_kprime(K) zero-padded to the 64-octet block.
"""
import hashlib
import hmac as _stdlib_hmac
import logging
from typing import List, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

BLOCK_SIZE = 64
DIGEST_SIZE = 32
IPAD = 0x36
OPAD = 0x5C


def sha256(m: bytes) -> bytes:
    """Return the 32-octet SHA-256 digest of m."""
    return hashlib.sha256(bytes(m)).digest()


def xor_bytes(a: bytes, b: bytes) -> bytes:
    """Octet-wise XOR of two equal-length strings."""
    if len(a) != len(b):
        raise ValueError(f"xor operands differ in length: {len(a)} != {len(b)}")
    return np.bitwise_xor(
        np.frombuffer(bytes(a), dtype=np.uint8),
        np.frombuffer(bytes(b), dtype=np.uint8),
    ).tobytes()


def derive_kprime(key: bytes) -> bytes:
    """Keys longer than the block size are replaced by their digest."""
    key = bytes(key)
    if len(key) > BLOCK_SIZE:
        return sha256(key)
    return key


def _padded_key(key: bytes, pad: int) -> bytes:
    block = derive_kprime(key).ljust(BLOCK_SIZE, b"\x00")
    return xor_bytes(block, bytes([pad]) * BLOCK_SIZE)


def hmac_sha256(key: bytes, m: bytes) -> bytes:
    inner = sha256(_padded_key(key, IPAD) + bytes(m))
    return sha256(_padded_key(key, OPAD) + inner)


def digests_equal(a: bytes, b: bytes) -> bool:
    """Full-length comparison; lengths must match too."""
    return _stdlib_hmac.compare_digest(bytes(a), bytes(b))


class CryptoVector(NamedTuple):
    name: str
    key: bytes
    message: bytes
    expected: bytes


# Published SHA-256 / HMAC-SHA256 vectors (FIPS 180 examples, RFC 4231).
# A key of None marks a plain hash vector.
SELF_TEST_VECTORS = (
    CryptoVector(
        "sha256-empty", None, b"",
        bytes.fromhex("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    ),
    CryptoVector(
        "sha256-abc", None, b"abc",
        bytes.fromhex("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
    ),
    CryptoVector(
        "rfc4231-1", b"\x0b" * 20, b"Hi There",
        bytes.fromhex("b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"),
    ),
    CryptoVector(
        "rfc4231-2", b"Jefe", b"what do ya want for nothing?",
        bytes.fromhex("5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"),
    ),
    CryptoVector(
        "rfc4231-3", b"\xaa" * 20, b"\xdd" * 50,
        bytes.fromhex("773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"),
    ),
    CryptoVector(
        "rfc4231-4", bytes(range(1, 26)), b"\xcd" * 50,
        bytes.fromhex("82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b"),
    ),
    CryptoVector(
        "rfc4231-6", b"\xaa" * 131,
        b"Test Using Larger Than Block-Size Key - Hash Key First",
        bytes.fromhex("60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"),
    ),
    CryptoVector(
        "rfc4231-7", b"\xaa" * 131,
        b"This is a test using a larger than block-size key and a larger than "
        b"block-size data. The key needs to be hashed before being used by the "
        b"HMAC algorithm.",
        bytes.fromhex("9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2"),
    ),
)


def self_test() -> List[str]:
    """Run the embedded vector suite; return the names of failing vectors."""
    failures = []
    for vector in SELF_TEST_VECTORS:
        if vector.key is None:
            actual = sha256(vector.message)
        else:
            actual = hmac_sha256(vector.key, vector.message)
        if actual != vector.expected:
            failures.append(vector.name)
    if failures:
        logger.error("crypto self-test failed: %s", ", ".join(failures))
    return failures
