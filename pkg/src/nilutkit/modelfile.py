"""The ``.nilut`` container and parameter/size accounting.

Layout (all integers little-endian)::

    offset 0   4 bytes   magic b"NILT"
    offset 4   uint32    header length H in bytes
    offset 8   H bytes   UTF-8 JSON header, sorted keys, no insignificant whitespace
    offset 8+H 4*P bytes float32 parameters in the flat layout order

The header is canonical, so ``save(load(b)) == b`` for any valid file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, LengthMismatch, ModelFileError, VersionUnsupported
from .lut3d import Lut3d
from .neuralut import MlpConfig, MlpParams, param_count

MAGIC = b"NILT"
FORMAT_VERSION = 1
REFERENCE_LUT_SIZE = 33
_CONFIG_KEYS = ("arch", "neurons", "hidden_layers", "cond_dim", "omega0", "activation")


@dataclass
class ModelMeta:
    style_names: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False).encode()


def save_model(params: MlpParams, meta: ModelMeta | None = None) -> bytes:
    meta = meta or ModelMeta()
    config = params.config
    if config.cond_dim and meta.style_names and len(meta.style_names) != config.cond_dim:
        raise ModelFileError(
            f"{len(meta.style_names)} style names for a model with {config.cond_dim} styles"
        )
    header = {
        "format_version": FORMAT_VERSION,
        "config": {k: getattr(config, k) for k in _CONFIG_KEYS},
        "param_count": param_count(config),
        "style_names": list(meta.style_names),
        "provenance": meta.provenance,
    }
    head = _canonical(header)
    payload = params.flat.astype("<f4").tobytes()
    return MAGIC + struct.pack("<I", len(head)) + head + payload


def load_model(data: bytes) -> tuple[MlpParams, ModelMeta]:
    if len(data) < 8 or data[:4] != MAGIC:
        raise BadMagic("not a .nilut model file")
    (hlen,) = struct.unpack("<I", data[4:8])
    if 8 + hlen > len(data):
        raise LengthMismatch("header extends past end of file")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"unreadable model header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionUnsupported(f"unsupported model format version {header.get('format_version')!r}")
    try:
        config = MlpConfig(**{k: header["config"][k] for k in _CONFIG_KEYS})
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"incomplete model config: {exc}") from exc
    count = param_count(config)
    payload = data[8 + hlen :]
    if header.get("param_count") != count or len(payload) != 4 * count:
        raise LengthMismatch(
            f"payload holds {len(payload) // 4} parameters, config needs {count}"
        )
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    meta = ModelMeta(style_names=list(header.get("style_names", [])), provenance=header.get("provenance", {}))
    return MlpParams(config, flat), meta


def write_model(path, params: MlpParams, meta: ModelMeta | None = None) -> None:
    Path(path).write_bytes(save_model(params, meta))


def read_model(path) -> tuple[MlpParams, ModelMeta]:
    return load_model(Path(path).read_bytes())


# --------------------------------------------------------------------------
# Size accounting


@dataclass(frozen=True)
class SizeReport:
    name: str
    values: int
    bytes_fp32: int
    reference: str
    reference_values: int
    compression: float

    @property
    def megabytes(self) -> float:
        return self.bytes_fp32 / 1e6

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "values": self.values,
            "bytes_fp32": self.bytes_fp32,
            "megabytes": round(self.megabytes, 4),
            "reference": self.reference,
            "reference_values": self.reference_values,
            "compression": round(self.compression, 3),
        }

    def lines(self) -> list[str]:
        return [
            f"{self.name}: {self.values:,} values, {self.bytes_fp32:,} bytes fp32 ({self.megabytes:.3f} MB)",
            f"vs {self.reference} ({self.reference_values:,} values): compression {self.compression:.2f}x",
        ]


def _describe(obj) -> tuple[str, int]:
    if isinstance(obj, MlpParams):
        obj = obj.config
    if isinstance(obj, MlpConfig):
        return obj.describe(), param_count(obj)
    if isinstance(obj, Lut3d):
        return f"{obj.size}^3 LUT", obj.size**3 * 3
    if isinstance(obj, int) and obj > 0:
        return f"{obj}^3 LUT", obj**3 * 3
    raise TypeError(f"cannot size {type(obj).__name__}")


def size_report(obj, reference=REFERENCE_LUT_SIZE) -> SizeReport:
    """Parameter count, fp32 bytes and compression ratio against ``reference``.

    ``obj`` and ``reference`` may be a model (params or config), a ``Lut3d``
    or an integer lattice size. The default reference is a 33-node LUT.
    """
    name, values = _describe(obj)
    ref_name, ref_values = _describe(reference)
    return SizeReport(
        name=name,
        values=values,
        bytes_fp32=4 * values,
        reference=ref_name,
        reference_values=ref_values,
        compression=ref_values / values,
    )
