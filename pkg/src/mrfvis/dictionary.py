"""Parameter grids and signal dictionaries.

A dictionary is a matrix with one simulated signal curve per (t1, t2, b1)
atom. Atoms are ordered row-major with b1 outermost, then t1, then t2, and
only combinations with t1 > t2 are sampled. That ordering makes each b1
sub-dictionary a contiguous row slice.

Dictionaries persist to a little-endian binary ``.mrfd`` container:
magic ``MRFD``, u32 version, u32 metadata length, UTF-8 JSON metadata,
float32 row-major entry matrix, u32 CRC32 over metadata+entries.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import DomainError, FileFormatError
from .signal_models import (
    ClassicalTiming,
    SequenceSpec,
    TissueParams,
    fisp_curves,
    ir_signal,
    tse_signal,
)

MAGIC = b"MRFD"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class RangeSpec:
    """Inclusive arithmetic range ``start : step : stop`` (MATLAB colon style)."""

    start: float
    step: float
    stop: float

    def __post_init__(self):
        if self.step <= 0:
            raise DomainError(f"range step must be > 0, got {self.step}")
        if self.start > self.stop:
            raise DomainError(f"range start {self.start} exceeds stop {self.stop}")

    @classmethod
    def parse(cls, text: str) -> "RangeSpec":
        parts = text.split(":")
        if len(parts) == 1:
            v = float(parts[0])
            return cls(v, 1.0, v)
        if len(parts) != 3:
            raise DomainError(f"range must be 'start:step:stop' or a single value, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), float(parts[2]))

    def values(self) -> np.ndarray:
        # Half-step slack keeps the endpoint inclusive under float rounding.
        count = int(np.floor((self.stop - self.start) / self.step + 0.5)) + 1
        vals = self.start + self.step * np.arange(count, dtype=np.float64)
        return vals[vals <= self.stop + 1e-9 * self.step]

    def __str__(self) -> str:
        return f"{self.start:g}:{self.step:g}:{self.stop:g}"


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Axis values plus the enumerated (t1, t2, b1) atoms with t1 > t2."""

    t1_values: np.ndarray
    t2_values: np.ndarray
    b1_values: np.ndarray
    atoms: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in ("t1_values", "t2_values", "b1_values"):
            vals = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if vals.size == 0:
                raise DomainError(f"{name} is empty")
            if np.any(np.diff(vals) <= 0):
                raise DomainError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)
        pairs = [(t1, t2) for t1 in self.t1_values for t2 in self.t2_values if t1 > t2]
        if not pairs:
            raise DomainError("grid contains no atoms with t1 > t2")
        pair_arr = np.array(pairs, dtype=np.float64)
        atoms = np.empty((self.b1_values.size * pair_arr.shape[0], 3), dtype=np.float64)
        for i, b1 in enumerate(self.b1_values):
            block = slice(i * pair_arr.shape[0], (i + 1) * pair_arr.shape[0])
            atoms[block, :2] = pair_arr
            atoms[block, 2] = b1
        object.__setattr__(self, "atoms", atoms)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_pairs(self) -> int:
        """Atoms per b1 slice."""
        return self.atoms.shape[0] // self.b1_values.size

    def b1_slice(self, b1: float) -> slice:
        """Contiguous atom-row slice for one b1 value."""
        idx = int(np.argmin(np.abs(self.b1_values - b1)))
        if not np.isclose(self.b1_values[idx], b1, rtol=1e-9, atol=1e-12):
            raise DomainError(f"b1={b1} is not a grid value (axis: {self.b1_values})")
        return slice(idx * self.n_pairs, (idx + 1) * self.n_pairs)

    def snap(self, t1: float, t2: float) -> tuple[float, float, float]:
        """Nearest valid (t1, t2) atom values and the snap distance."""
        t1s = self.t1_values[np.argmin(np.abs(self.t1_values - t1))]
        t2s = self.t2_values[np.argmin(np.abs(self.t2_values - t2))]
        if t1s <= t2s:
            pairs = self.atoms[: self.n_pairs, :2]
            d = np.hypot(pairs[:, 0] - t1, pairs[:, 1] - t2)
            t1s, t2s = pairs[int(np.argmin(d))]
        dist = float(np.hypot(t1s - t1, t2s - t2))
        return float(t1s), float(t2s), dist

    def atom_index(self, t1: float, t2: float, b1: float = 1.0) -> int:
        """Exact atom lookup; values must already lie on the grid."""
        sl = self.b1_slice(b1)
        pairs = self.atoms[sl, :2]
        hits = np.flatnonzero(np.isclose(pairs[:, 0], t1) & np.isclose(pairs[:, 1], t2))
        if hits.size == 0:
            raise DomainError(f"(t1={t1}, t2={t2}) is not a grid atom")
        return sl.start + int(hits[0])

    def __eq__(self, other):
        if not isinstance(other, ParameterGrid):
            return NotImplemented
        return (
            np.array_equal(self.t1_values, other.t1_values)
            and np.array_equal(self.t2_values, other.t2_values)
            and np.array_equal(self.b1_values, other.b1_values)
        )


def build_grid(
    t1_spec: RangeSpec | str,
    t2_spec: RangeSpec | str,
    b1_spec: RangeSpec | str | None = None,
) -> ParameterGrid:
    """Enumerate grid axes inclusively and keep atoms with t1 > t2."""
    t1_spec = RangeSpec.parse(t1_spec) if isinstance(t1_spec, str) else t1_spec
    t2_spec = RangeSpec.parse(t2_spec) if isinstance(t2_spec, str) else t2_spec
    if isinstance(b1_spec, str):
        b1_spec = RangeSpec.parse(b1_spec)
    b1_values = np.array([1.0]) if b1_spec is None else b1_spec.values()
    return ParameterGrid(t1_spec.values(), t2_spec.values(), b1_values)


@dataclass(frozen=True)
class SequenceModel:
    """Selects the signal model and carries its parameters."""

    kind: Literal["tse", "ir", "epg-fisp"]
    name: str
    timing: ClassicalTiming | None = None
    sequence: SequenceSpec | None = None

    def __post_init__(self):
        if self.kind in ("tse", "ir") and self.timing is None:
            raise DomainError(f"model kind {self.kind!r} requires timing")
        if self.kind == "epg-fisp" and self.sequence is None:
            raise DomainError("model kind 'epg-fisp' requires a sequence spec")
        if self.kind not in ("tse", "ir", "epg-fisp"):
            raise DomainError(f"unknown model kind {self.kind!r}")


@dataclass(eq=False)
class Dictionary:
    """Simulated signal curves over a parameter grid.

    ``entries`` is the float32 raw curve matrix; ``entries_unit`` holds the
    same rows L2-normalized in float64. Identically-zero rows are flagged
    in ``valid_rows`` and excluded from matching.
    """

    grid: ParameterGrid
    entries: np.ndarray
    meta: dict
    entries_unit: np.ndarray = field(init=False, repr=False)
    valid_rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.entries = np.ascontiguousarray(self.entries, dtype=np.float32)
        if self.entries.shape[0] != self.grid.n_atoms:
            raise DomainError(
                f"entry rows ({self.entries.shape[0]}) != grid atoms ({self.grid.n_atoms})"
            )
        rows = self.entries.astype(np.float64)
        norms = np.linalg.norm(rows, axis=1)
        self.valid_rows = norms > 0.0
        safe = np.where(self.valid_rows, norms, 1.0)
        self.entries_unit = rows / safe[:, None]

    @property
    def n_atoms(self) -> int:
        return self.entries.shape[0]

    @property
    def curve_length(self) -> int:
        return self.entries.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.entries, other.entries)
            and self.meta == other.meta
        )


def _sequence_meta(model: SequenceModel, n_samples: int) -> dict:
    meta = {"model": model.kind, "name": model.name, "curve_length": n_samples, "truncated_to": None}
    if model.kind in ("tse", "ir"):
        t = model.timing
        meta.update(tr=t.tr, te=list(t.te), ti=list(t.ti), n_samples=t.n_samples)
    else:
        s = model.sequence
        meta.update(
            tr=s.tr,
            te=s.te,
            inversion=bool(s.inversion),
            n_pulses=int(s.flip_train.size),
            inversion_gap_tr=1,  # the inversion pulse occupies one TR before the train
        )
    return meta


def build_dictionary(grid: ParameterGrid, model: SequenceModel) -> Dictionary:
    """Simulate one curve per atom; b1 of the atom replaces the spec's b1_scale."""
    t1 = grid.atoms[:, 0]
    t2 = grid.atoms[:, 1]
    b1 = grid.atoms[:, 2]
    if model.kind == "tse":
        curves = _classical_batch(tse_signal, t1, t2, model.timing)
    elif model.kind == "ir":
        curves = _classical_batch(ir_signal, t1, t2, model.timing)
    else:
        spec = replace(model.sequence, b1_scale=1.0)
        curves = fisp_curves(t1, t2, 1.0, b1 * model.sequence.b1_scale, spec)
    meta = _sequence_meta(model, curves.shape[1])
    return Dictionary(grid=grid, entries=curves.astype(np.float32), meta=meta)


def _classical_batch(op, t1, t2, timing: ClassicalTiming) -> np.ndarray:
    out = np.empty((t1.size, timing.n_samples), dtype=np.float64)
    for i in range(t1.size):
        try:
            out[i] = op(TissueParams(t1[i], t2[i]), timing)
        except DomainError as exc:
            raise DomainError(f"atom (t1={t1[i]}, t2={t2[i]}): {exc}") from exc
    return out


def truncate(d: Dictionary, length: int) -> Dictionary:
    """Restrict curves to their first ``length`` samples and renormalize."""
    if not (1 <= length <= d.curve_length):
        raise DomainError(f"truncation length {length} outside [1, {d.curve_length}]")
    meta = dict(d.meta)
    meta["truncated_to"] = int(length)
    return Dictionary(grid=d.grid, entries=d.entries[:, :length].copy(), meta=meta)


def save(d: Dictionary, path: str | Path) -> None:
    """Write the ``.mrfd`` container; `load` restores it bit-exactly."""
    meta = {
        "grid": {
            "t1_values": d.grid.t1_values.tolist(),
            "t2_values": d.grid.t2_values.tolist(),
            "b1_values": d.grid.b1_values.tolist(),
        },
        "sequence": d.meta,
        "n_atoms": d.n_atoms,
        "curve_length": d.curve_length,
        "dtype": "float32",
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = d.entries.tobytes(order="C")
    crc = zlib.crc32(meta_bytes + payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(FORMAT_VERSION).tobytes())
        fh.write(np.uint32(len(meta_bytes)).tobytes())
        fh.write(meta_bytes)
        fh.write(payload)
        fh.write(np.uint32(crc).tobytes())


def load(path: str | Path) -> Dictionary:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise FileFormatError(f"{path}: not a dictionary file (bad magic)")
    version = int(np.frombuffer(blob[4:8], dtype=np.uint32)[0])
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported format version {version}")
    meta_len = int(np.frombuffer(blob[8:12], dtype=np.uint32)[0])
    meta_end = 12 + meta_len
    try:
        meta = json.loads(blob[12:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: corrupt metadata block: {exc}") from exc
    n_atoms = meta["n_atoms"]
    curve_length = meta["curve_length"]
    payload_len = n_atoms * curve_length * 4
    if len(blob) != meta_end + payload_len + 4:
        raise FileFormatError(
            f"{path}: payload size mismatch (header says {n_atoms}x{curve_length})"
        )
    payload = blob[meta_end : meta_end + payload_len]
    crc_stored = int(np.frombuffer(blob[-4:], dtype=np.uint32)[0])
    crc = zlib.crc32(blob[12:meta_end] + payload) & 0xFFFFFFFF
    if crc != crc_stored:
        raise FileFormatError(f"{path}: CRC mismatch")
    grid = ParameterGrid(
        np.array(meta["grid"]["t1_values"]),
        np.array(meta["grid"]["t2_values"]),
        np.array(meta["grid"]["b1_values"]),
    )
    entries = np.frombuffer(payload, dtype=np.float32).reshape(n_atoms, curve_length)
    return Dictionary(grid=grid, entries=entries.copy(), meta=meta["sequence"])


def export_csv(d: Dictionary, path: str | Path) -> None:
    """One row per atom: t1,t2,b1 then the raw curve samples."""
    with open(path, "w") as fh:
        fh.write("t1,t2,b1," + ",".join(f"s{i}" for i in range(d.curve_length)) + "\n")
        for (t1, t2, b1), row in zip(d.grid.atoms, d.entries):
            vals = ",".join(repr(float(v)) for v in row)
            fh.write(f"{t1!r},{t2!r},{b1!r},{vals}\n")
