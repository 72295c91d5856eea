"""Model checkpoints.

Layout, all integers little-endian:

    b"FGCK"
    u32 header length, JSON header (specs, spec hashes, noise dimension, round index, ...)
    u32 length, generator ParamVector bytes
    u32 length, discriminator ParamVector bytes

Each ParamVector blob starts with its own spec hash, which must match the spec in the header.
Files are written to a temporary sibling and renamed into place, so a reader never sees a
partially written checkpoint.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, ValidationError

from fedgan_ids.constants import CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC
from fedgan_ids.errors import (
    CheckpointError,
    ContractViolation,
    NumericalError,
    SpecMismatchError,
)
from fedgan_ids.gan.mlp import MlpSpec, ParamVector
from fedgan_ids.gan.model import GanModel

_LENGTH = struct.Struct("<I")


class CheckpointHeader(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    format_version: int = CHECKPOINT_FORMAT_VERSION
    generator_spec: dict[str, Any]
    discriminator_spec: dict[str, Any]
    generator_spec_hash: str
    discriminator_spec_hash: str
    noise_dim: int
    round_index: int = 0
    config_digest: str | None = None
    sample_count: int | None = None


@dataclass(frozen=True)
class Checkpoint:
    model: GanModel
    round_index: int = 0
    config_digest: str | None = None
    sample_count: int | None = None


def _frame(blob: bytes) -> bytes:
    return _LENGTH.pack(len(blob)) + blob


def checkpoint_bytes(checkpoint: Checkpoint) -> bytes:
    model = checkpoint.model
    header = CheckpointHeader(
        generator_spec=model.generator_spec.as_dict(),
        discriminator_spec=model.discriminator_spec.as_dict(),
        generator_spec_hash=model.generator_spec.spec_hash.hex(),
        discriminator_spec_hash=model.discriminator_spec.spec_hash.hex(),
        noise_dim=model.noise_dim,
        round_index=checkpoint.round_index,
        config_digest=checkpoint.config_digest,
        sample_count=checkpoint.sample_count,
    )
    return (
        CHECKPOINT_MAGIC
        + _frame(header.model_dump_json().encode("utf-8"))
        + _frame(model.generator_params.to_bytes())
        + _frame(model.discriminator_params.to_bytes())
    )


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> None:
    data = checkpoint_bytes(checkpoint)
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as file:
            file.write(data)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(f"Checkpoint is truncated inside the {what}.")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def take_framed(self, what: str) -> bytes:
        (size,) = _LENGTH.unpack(self.take(_LENGTH.size, what))
        return self.take(size, what)


def _check_spec(name: str, spec: MlpSpec, recorded_hash: str) -> None:
    if spec.spec_hash.hex() != recorded_hash:
        raise CheckpointError(
            f"The {name} spec in the header does not hash to {recorded_hash}."
        )


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(CHECKPOINT_MAGIC), "magic prefix") != CHECKPOINT_MAGIC:
        raise CheckpointError("Not a checkpoint: the magic prefix is missing.")
    try:
        header = CheckpointHeader.model_validate_json(reader.take_framed("header"))
    except ValidationError as e:
        raise CheckpointError(f"Malformed checkpoint header: {e}") from e
    if header.format_version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint format version {header.format_version}."
        )
    try:
        generator_spec = MlpSpec.from_dict(header.generator_spec)
        discriminator_spec = MlpSpec.from_dict(header.discriminator_spec)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Malformed network spec in header: {e}") from e
    _check_spec("generator", generator_spec, header.generator_spec_hash)
    _check_spec("discriminator", discriminator_spec, header.discriminator_spec_hash)

    generator_blob = reader.take_framed("generator parameters")
    discriminator_blob = reader.take_framed("discriminator parameters")
    if reader.offset != len(data):
        raise CheckpointError("Checkpoint has trailing bytes.")
    try:
        model = GanModel(
            generator_spec=generator_spec,
            discriminator_spec=discriminator_spec,
            generator_params=ParamVector.from_bytes(generator_blob, generator_spec),
            discriminator_params=ParamVector.from_bytes(
                discriminator_blob, discriminator_spec
            ),
            noise_dim=header.noise_dim,
        )
    except (ContractViolation, NumericalError) as e:
        raise CheckpointError(f"Inconsistent checkpoint: {e}") from e
    return Checkpoint(
        model=model,
        round_index=header.round_index,
        config_digest=header.config_digest,
        sample_count=header.sample_count,
    )


def load_checkpoint(path: Path, expected: GanModel | None = None) -> Checkpoint:
    """Read a checkpoint, refusing it if its networks differ from `expected`'s."""
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read {path}: {e.strerror}") from e
    checkpoint = checkpoint_from_bytes(data)
    if expected is not None:
        for mine, theirs in (
            (expected.generator_spec, checkpoint.model.generator_spec),
            (expected.discriminator_spec, checkpoint.model.discriminator_spec),
        ):
            if mine != theirs:
                raise SpecMismatchError(
                    expected=mine.spec_hash.hex(), found=theirs.spec_hash.hex()
                )
    return checkpoint
