"""PFS samples files: fixed-size packed records after a JSON header.

Record layout (little-endian, no padding): row u32, col u32, target day u32
(days since cube start), label u8, land-cover class u8, payload float32[*].
Payloads are stored raw; the header carries the standardization stats to
apply at load time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from firedanger.binfmt import read_header, write_container
from firedanger.datacube.cube import Datacube
from firedanger.errors import FormatError, SchemaError
from firedanger.sampling.dataset import RecordIndex
from firedanger.sampling.extract import Extractor, feature_names, modality_shape
from firedanger.sampling.standardize import StandardizationStats, apply_standardization

MAGIC = b"PFS1"
CHUNK = 128


def record_dtype(payload_shape: tuple[int, ...]) -> np.dtype:
    return np.dtype(
        [
            ("row", "<u4"),
            ("col", "<u4"),
            ("day", "<u4"),
            ("label", "u1"),
            ("landcover", "u1"),
            ("payload", "<f4", payload_shape),
        ]
    )


@dataclass
class SampleSet:
    """An in-memory modality batch with its index columns."""

    modality: str
    names: list[str]
    index: RecordIndex
    payloads: np.ndarray
    header: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.index)

    @property
    def labels(self) -> np.ndarray:
        return self.index.labels

    @property
    def stats(self) -> StandardizationStats | None:
        st = self.header.get("standardization")
        return StandardizationStats.from_dict(st) if st else None

    def standardized(self, stats: StandardizationStats | None = None) -> np.ndarray:
        stats = stats or self.stats
        if stats is None:
            raise SchemaError(f"samples for {self.modality} carry no standardization statistics")
        return apply_standardization(stats, self.payloads, self.modality, self.names)

    def index_keys(self) -> list[tuple[int, int, int, int]]:
        return self.index.keys()


def write_samples(
    path: str | os.PathLike,
    cube: Datacube,
    modality: str,
    index: RecordIndex,
    header_extra: dict,
    extractor: Extractor | None = None,
) -> int:
    """Extract and write ``index`` record by record chunk; returns the record count."""
    ex = extractor or Extractor(cube)
    shape = modality_shape(cube, modality).payload_shape
    dtype = record_dtype(shape)
    if len(index) and (index.landcover.min() < 0 or index.landcover.max() > 255):
        raise SchemaError("land-cover classes must fit in an unsigned byte")
    header = {
        "format": "PFS1",
        "modality": modality,
        "payload_shape": list(shape),
        "feature_names": feature_names(cube.schema, modality),
        "schema_hash": cube.schema_hash,
        "cube_start_date": cube.start_date.isoformat(),
        "n_records": len(index),
        "record_bytes": dtype.itemsize,
        "record_layout": "row u32, col u32, day u32, label u8, landcover u8, payload f32 LE",
        **header_extra,
    }

    def chunks():
        for s in range(0, len(index), CHUNK):
            part = index.take(slice(s, s + CHUNK))
            rec = np.zeros(len(part), dtype=dtype)
            rec["row"], rec["col"], rec["day"] = part.rows, part.cols, part.days
            rec["label"], rec["landcover"] = part.labels, part.landcover
            rec["payload"] = ex.batch(modality, part.rows, part.cols, part.days)
            yield rec.tobytes()

    write_container(path, MAGIC, header, chunks())
    return len(index)


def read_samples_header(path: str | os.PathLike) -> dict:
    return read_header(path, MAGIC)[1]


def load_samples(path: str | os.PathLike, mmap: bool = False) -> SampleSet:
    _, header, offset, size = read_header(path, MAGIC)
    try:
        shape = tuple(int(s) for s in header["payload_shape"])
        n = int(header["n_records"])
        modality = header["modality"]
        names = list(header["feature_names"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed PFS header ({exc})", 8) from exc
    dtype = record_dtype(shape)
    expected = offset + n * dtype.itemsize
    if size != expected:
        raise FormatError(
            f"{path}: header declares {n} records of {dtype.itemsize} bytes but payload holds {size - offset} bytes",
            min(size, expected),
        )
    if mmap:
        rec = np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=(n,))
        payloads = rec["payload"]
    else:
        rec = np.fromfile(path, dtype=dtype, count=n, offset=offset)
        payloads = np.ascontiguousarray(rec["payload"])
    idx = RecordIndex(
        rec["row"].astype(np.int64),
        rec["col"].astype(np.int64),
        rec["day"].astype(np.int64),
        rec["label"].astype(np.int64),
        rec["landcover"].astype(np.int64),
    )
    return SampleSet(modality, names, idx, payloads, header)


def save_sample_set(path: str | os.PathLike, samples: SampleSet) -> None:
    """Rewrite an already loaded set (same header, same bytes)."""
    shape = samples.payloads.shape[1:]
    dtype = record_dtype(tuple(shape))
    header = dict(samples.header)

    def chunks():
        for s in range(0, len(samples), CHUNK):
            part = samples.index.take(slice(s, s + CHUNK))
            rec = np.zeros(len(part), dtype=dtype)
            rec["row"], rec["col"], rec["day"] = part.rows, part.cols, part.days
            rec["label"], rec["landcover"] = part.labels, part.landcover
            rec["payload"] = samples.payloads[s : s + CHUNK]
            yield rec.tobytes()

    write_container(path, MAGIC, header, chunks())
