"""
Binary checkpoint format.

    magic (8 bytes) | version (uint32 LE) | header length (uint64 LE) | header (UTF-8 JSON)
    | payload: every array as little-endian IEEE-754 float64, in manifest order
    | SHA-256 of the payload (32 bytes)

The JSON header holds the encoder config, K, A, the manifest (name, shape,
element type) and the frozen-flag table. Loading validates everything before
returning, so a failed load never yields partial parameters.
"""
import hashlib
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from data_science.src.errors import CheckpointError, CheckpointFormatError, CheckpointShapeError
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.network import ModelParams, parameter_shapes

MAGIC = b"CHMASKv\x00"
VERSION = 1
ELEMENT_TYPE = "<f8"
_PREFIX = struct.Struct("<8sIQ")
_DIGEST_SIZE = 32


def save_checkpoint(params: ModelParams, path: str | Path) -> Path:
    """
    Write params (including batch-norm running statistics and frozen flags) to path.

    Returns:
        Path: The written file

    Raises:
        CheckpointError: The file cannot be written
    """
    path = Path(path)
    manifest = [{"name": name, "shape": list(array.shape), "dtype": ELEMENT_TYPE}
                for name, array in params.arrays.items()]
    header = json.dumps({
        "config": params.config.to_dict(),
        "channel_count": params.channel_count,
        "num_classes": params.num_classes,
        "manifest": manifest,
        "frozen": params.frozen,
    }, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(array, dtype=ELEMENT_TYPE).tobytes() for array in params.arrays.values())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
            f.write(header)
            f.write(payload)
            f.write(hashlib.sha256(payload).digest())
    except OSError as e:
        raise CheckpointError(f"Failed to write checkpoint {path}: {e}", cause=e)
    return path


def load_checkpoint(path: str | Path, channel_count: Optional[int] = None,
                    num_classes: Optional[int] = None) -> ModelParams:
    """
    Read a checkpoint written by save_checkpoint.

    Args:
        path (str | Path): Checkpoint file
        channel_count (int, optional): K the caller's data has; checked against the file
        num_classes (int, optional): A the caller's data has; checked against the file

    Returns:
        ModelParams: Bit-identical to the saved parameters

    Raises:
        CheckpointError: Missing or unreadable file
        CheckpointFormatError: Bad magic/version, truncation, digest or manifest mismatch
        CheckpointShapeError: K or A differ from the expected values (names the array)
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}", cause=e)

    if len(blob) < _PREFIX.size:
        raise CheckpointFormatError(f"{path}: truncated header")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    header_end = _PREFIX.size + header_len
    if len(blob) < header_end:
        raise CheckpointFormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[_PREFIX.size:header_end].decode("utf-8"))
        config = EncoderConfig.from_dict(header["config"])
        file_channels, file_classes = int(header["channel_count"]), int(header["num_classes"])
        manifest, frozen = header["manifest"], {k: bool(v) for k, v in header["frozen"].items()}
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointFormatError(f"{path}: malformed header: {e}", cause=e)

    expected = parameter_shapes(config, file_channels, file_classes)
    if [entry["name"] for entry in manifest] != list(expected):
        raise CheckpointFormatError(f"{path}: manifest array names do not match the declared config")
    for entry in manifest:
        if tuple(entry["shape"]) != expected[entry["name"]] or entry["dtype"] != ELEMENT_TYPE:
            raise CheckpointFormatError(
                f"{path}: manifest entry '{entry['name']}' {entry['dtype']}{tuple(entry['shape'])} "
                f"disagrees with the declared config {expected[entry['name']]}")

    payload_size = sum(8 * int(np.prod(shape)) for shape in expected.values())
    if len(blob) != header_end + payload_size + _DIGEST_SIZE:
        raise CheckpointFormatError(f"{path}: expected {header_end + payload_size + _DIGEST_SIZE} bytes, "
                                    f"found {len(blob)} (truncated or trailing data)")
    payload = blob[header_end:header_end + payload_size]
    if hashlib.sha256(payload).digest() != blob[header_end + payload_size:]:
        raise CheckpointFormatError(f"{path}: payload digest mismatch")

    if channel_count is not None and channel_count != file_channels:
        raise CheckpointShapeError(
            f"array 'encoder.embed.weight' has shape {expected['encoder.embed.weight']}, "
            f"expected {(config.d_model, channel_count)}", array_name="encoder.embed.weight")
    if num_classes is not None and num_classes != file_classes:
        name = f"classifier_head.fc{len(config.head_widths) + 1}.weight"
        raise CheckpointShapeError(
            f"array '{name}' has shape {expected[name]}, expected {(expected[name][0], num_classes)}",
            array_name=name)

    arrays, offset = {}, 0
    for name, shape in expected.items():
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(payload, dtype=ELEMENT_TYPE, count=count, offset=offset).astype(np.float64).reshape(shape)
        offset += 8 * count
    return ModelParams(config, file_channels, file_classes, arrays, frozen)
