"""Named parameter collections and their on-disk checkpoint format.

A parameter set is a mapping name -> float64 ndarray with deterministic
(lexicographic) iteration order, so that optimizer updates, serialization and
random initialization are reproducible regardless of construction order.

Checkpoint layout (little-endian, extension ``.pcgf``):
    magic b"PCGF" | version u32 | repeated records until EOF:
        name_len u32 | name bytes (utf-8) | rank u32 | dims u32 * rank | values f64
"""

from __future__ import annotations

import struct
from typing import Dict, Iterator, Tuple

import numpy as np

from ..errors import FormatError

MAGIC = b"PCGF"
VERSION = 1


class ModelParams:
    """Ordered name -> tensor map. Shapes are fixed after insertion."""

    def __init__(self, arrays: Dict[str, np.ndarray] | None = None):
        self._arrays: Dict[str, np.ndarray] = {}
        if arrays:
            for name in sorted(arrays):
                self.add(name, arrays[name])

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._arrays:
            raise ValueError(f"duplicate parameter name: {name!r}")
        self._arrays[name] = np.asarray(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if name in self._arrays and value.shape != self._arrays[name].shape:
            raise ValueError(
                f"shape of {name!r} is immutable: "
                f"{self._arrays[name].shape} -> {value.shape}"
            )
        self._arrays[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return sorted(self._arrays)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in self.names():
            yield name, self._arrays[name]

    def copy(self) -> "ModelParams":
        out = ModelParams()
        for name, arr in self.items():
            out.add(name, arr.copy())
        return out

    def total_size(self) -> int:
        return sum(arr.size for arr in self._arrays.values())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            for name, arr in self.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != MAGIC:
            raise FormatError(f"{path}: not a PCGF checkpoint")
        (version,) = struct.unpack_from("<I", blob, 4)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        out = cls()
        off = 8
        while off < len(blob):
            try:
                (name_len,) = struct.unpack_from("<I", blob, off)
                off += 4
                name = blob[off : off + name_len].decode("utf-8")
                off += name_len
                (rank,) = struct.unpack_from("<I", blob, off)
                off += 4
                dims = struct.unpack_from(f"<{rank}I", blob, off)
                off += 4 * rank
                count = int(np.prod(dims)) if rank else 1
                arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
                off += 8 * count
            except (struct.error, ValueError, UnicodeDecodeError) as exc:
                raise FormatError(f"{path}: truncated or corrupt checkpoint") from exc
            out.add(name, arr.reshape(dims).astype(np.float64))
        return out


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic stream; PCG64 keyed by a 64-bit seed (documented algorithm)."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights."""
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape)
