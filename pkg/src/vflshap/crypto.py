"""Double HMAC-SHA256 pseudonymization of sample identifiers."""

from __future__ import annotations

import hashlib
import hmac
import os
from pathlib import Path
from typing import Iterable, Union

from vflshap.errors import ConfigurationError

MIN_KEY_BYTES = 16
DIGEST_BYTES = 32

RawId = Union[str, bytes, int]


def hmac_sha256(key: bytes, message: bytes) -> bytes:
    return hmac.new(key, message, hashlib.sha256).digest()


def canonical_id(raw_id: RawId) -> bytes:
    """Byte encoding every party must agree on before hashing.

    Text is UTF-8 encoded, integers become minimal decimal text, bytes pass through.
    """
    if isinstance(raw_id, bytes):
        return raw_id
    if isinstance(raw_id, bool):
        raise TypeError("boolean identifiers are not supported")
    if isinstance(raw_id, int):
        return str(raw_id).encode("ascii")
    if isinstance(raw_id, str):
        return raw_id.encode("utf-8")
    raise TypeError(f"unsupported identifier type {type(raw_id).__name__}")


def check_key(key: bytes) -> bytes:
    if not isinstance(key, (bytes, bytearray)):
        raise ConfigurationError("secret key must be bytes")
    if len(key) == 0:
        raise ConfigurationError("secret key is empty")
    if len(key) < MIN_KEY_BYTES:
        raise ConfigurationError(
            f"secret key must be at least {MIN_KEY_BYTES} bytes, got {len(key)}"
        )
    return bytes(key)


def encrypt_id(key: bytes, raw_id: RawId) -> str:
    """Return HMAC(key, HMAC(key, id)) as 64 lowercase hex characters.

    The outer pass hashes the 32 raw bytes of the inner digest, not its hex form.
    """
    key = check_key(key)
    inner = hmac_sha256(key, canonical_id(raw_id))
    return hmac_sha256(key, inner).hex()


def encrypt_column(key: bytes, raw_ids: Iterable[RawId]) -> list[str]:
    key = check_key(key)
    return [encrypt_id(key, r) for r in raw_ids]


def is_encrypted_id(value) -> bool:
    if not isinstance(value, str) or len(value) != 2 * DIGEST_BYTES:
        return False
    return all(ch in "0123456789abcdef" for ch in value)


def _decode_key_material(data: bytes) -> bytes:
    text = data.strip()
    try:
        decoded = text.decode("ascii")
    except UnicodeDecodeError:
        return data
    if len(decoded) >= 2 * MIN_KEY_BYTES and len(decoded) % 2 == 0:
        try:
            return bytes.fromhex(decoded)
        except ValueError:
            pass
    return data


def load_key(path: str | os.PathLike | None = None, env_var: str | None = None) -> bytes:
    """Read the shared secret from a file or an environment variable.

    Hex text of at least 32 characters is decoded; file contents that are not
    hex are used as raw bytes. Environment values must be hex.
    """
    if path is None and env_var is None:
        raise ConfigurationError("no key source given")
    if path is not None:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise ConfigurationError(f"cannot read key file {path}: {exc}") from exc
        return check_key(_decode_key_material(data))
    value = os.environ.get(env_var)
    if not value:
        raise ConfigurationError(f"environment variable {env_var} is not set")
    try:
        key = bytes.fromhex(value.strip())
    except ValueError as exc:
        raise ConfigurationError(f"{env_var} does not hold hex key material") from exc
    return check_key(key)
