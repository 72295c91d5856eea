import hashlib

MODEL_HASH_SIZE = 16


def content_hash(*parts: bytes) -> str:
    """Hex digest identifying a model by the exact bytes of its parameters."""
    digest = hashlib.blake2b(digest_size=MODEL_HASH_SIZE)
    for part in parts:
        digest.update(part)
    return digest.hexdigest()
