"""
Model files. Layout (little endian): magic "CRPM", u32 version, u64 header length, UTF-8 JSON header, then every
tensor listed in the header as u32 rank, u32 dims, the real plane and the imaginary plane in row-major f32.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from crpmnet.engine.cops import CConvLayer
from crpmnet.engine.ctensor import CTensor, FloatArray
from crpmnet.engine.nets import HEAD, Network, NetworkParams, NetworkSpec
from crpmnet.polsar.features import NormalizationStats
from crpmnet.shared.constants import MODEL_MAGIC, MODEL_VERSION
from crpmnet.shared.exceptions import CrpmError, ModelFormatError
from crpmnet.shared.validation import check_model_header_schema

logger = logging.getLogger(__name__)

PREAMBLE = struct.Struct("<4sIQ")


@dataclass
class ModelFile:
    network: Network
    feature_mode: str = "complex"
    normalization: NormalizationStats | None = None
    train_config: dict[str, Any] | None = None
    seed: int | None = None

    def _tensors(self) -> list[tuple[str, FloatArray, FloatArray]]:
        tensors = []
        for group in self.network.spec.param_names:
            layer = self.network.params.layers[group]
            tensors.append((f"{group}.weight", layer.weights.real, layer.weights.imag))
            tensors.append((f"{group}.bias", layer.bias.real, layer.bias.imag))
        head = self.network.params.head
        tensors.append((HEAD, head, np.zeros_like(head)))
        return tensors

    def header(self) -> dict[str, Any]:
        header = self.network.spec.to_dict()
        header.update(
            {
                "feature_mode": self.feature_mode,
                "tensors": [{"name": name, "shape": list(real.shape)} for name, real, _ in self._tensors()],
                "frozen": sorted(self.network.params.frozen),
                "normalization": self.normalization.to_dict() if self.normalization else None,
                "train_config": self.train_config,
                "seed": self.seed,
            }
        )
        return header

    def to_bytes(self) -> bytes:
        header = json.dumps(self.header()).encode("utf-8")
        chunks = [PREAMBLE.pack(MODEL_MAGIC, MODEL_VERSION, len(header)), header]
        for _, real, imag in self._tensors():
            chunks.append(struct.pack(f"<I{real.ndim}I", real.ndim, *real.shape))
            chunks.append(real.astype("<f4").tobytes())
            chunks.append(imag.astype("<f4").tobytes())
        return b"".join(chunks)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())
        logger.info("Wrote %s model to %s", self.network.kind, path)

    @classmethod
    def load(cls, path: str | Path) -> ModelFile:
        return cls.from_bytes(Path(path).read_bytes(), str(path))

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> ModelFile:
        if len(data) < PREAMBLE.size:
            raise ModelFormatError(f"{source}: file is shorter than the model preamble")
        magic, version, header_length = PREAMBLE.unpack_from(data)
        if magic != MODEL_MAGIC:
            raise ModelFormatError(f"{source}: bad magic {magic!r}")
        if version != MODEL_VERSION:
            raise ModelFormatError(f"{source}: unsupported version {version}")
        start = PREAMBLE.size
        try:
            header = json.loads(data[start : start + header_length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise ModelFormatError(f"{source}: unreadable header") from err
        check_model_header_schema(header)
        offset = start + header_length
        arrays: dict[str, tuple[FloatArray, FloatArray]] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            prefix = struct.Struct(f"<I{len(shape)}I")
            count = int(np.prod(shape))
            end = offset + prefix.size + 8 * count
            if end > len(data):
                raise ModelFormatError(f"{source}: payload truncated in tensor {entry['name']}")
            rank, *dims = prefix.unpack_from(data, offset)
            if rank != len(shape) or tuple(dims) != shape:
                raise ModelFormatError(f"{source}: tensor {entry['name']} has shape {dims}, header says {list(shape)}")
            planes = np.frombuffer(data, dtype="<f4", count=2 * count, offset=offset + prefix.size).astype(np.float64)
            arrays[entry["name"]] = (planes[:count].reshape(shape), planes[count:].reshape(shape))
            offset = end
        if offset != len(data):
            raise ModelFormatError(f"{source}: {len(data) - offset} unexpected trailing bytes")
        try:
            spec = NetworkSpec.from_dict(header)
            layers = {}
            for group in spec.param_names:
                transposed = any(layer.kind == "ctransconv" for layer in spec.layers if layer.param == group)
                weights = CTensor(*arrays[f"{group}.weight"])
                bias = CTensor(*arrays[f"{group}.bias"])
                layers[group] = CConvLayer(weights, bias, transposed=transposed)
            params = NetworkParams(layers, arrays[HEAD][0], set(header["frozen"]))
            network = Network(spec, params)
        except KeyError as err:
            raise ModelFormatError(f"{source}: tensor {err} is missing") from err
        except CrpmError as err:
            raise ModelFormatError(f"{source}: {err}") from err
        normalization = NormalizationStats.from_dict(header["normalization"]) if header["normalization"] else None
        logger.info("Loaded %s model from %s", spec.kind, source)
        return cls(network, header["feature_mode"], normalization, header["train_config"], header["seed"])
