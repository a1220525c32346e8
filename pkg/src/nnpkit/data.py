"""Dataset ingestion: extended-XYZ text and a memory-mappable container.

The binary container is a little-endian format with magic ``MDK1``,
a u32 array count, and per array: u16 name length plus UTF-8 name, u8
dtype code (0 = f64, 1 = i64), u8 rank, rank u64 shape entries, then
raw data. Required arrays are ``pos``, ``z``, and ``energy``; ``forces``
and ``frame_offsets`` (for ragged frames) are optional. Arrays are read
through memory maps so nothing is loaded until sliced.
"""

from __future__ import annotations

import shlex
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .elements import symbol_to_z, z_to_symbol
from .errors import DataError, ParseError, ValidationError

CONTAINER_MAGIC = b"MDK1"
_DTYPE_CODES = {0: "<f8", 1: "<i8"}
_CODE_FOR_KIND = {"f": 0, "i": 1}


@dataclass(frozen=True)
class Frame:
    """One sample: coordinates, species, reference energy, optional forces."""

    positions: np.ndarray
    species: np.ndarray
    energy: float
    forces: Optional[np.ndarray] = None

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]


class Dataset:
    """Sequence of frames, materialized or backed by container memmaps."""

    def __init__(self, frames: Sequence[Frame]):
        self._frames = list(frames)

    @classmethod
    def from_frames(cls, frames: Sequence[Frame]) -> "Dataset":
        return cls(frames)

    def __len__(self) -> int:
        return len(self._frames)

    def __getitem__(self, index: int) -> Frame:
        return self._frames[index]

    def __iter__(self):
        return iter(self._frames)

    @property
    def has_forces(self) -> bool:
        return all(f.forces is not None for f in self._frames)

    def per_atom_energy_stats(self) -> tuple[float, float]:
        """Mean and standard deviation of energy per atom across frames."""
        values = np.array([f.energy / f.n_atoms for f in self._frames])
        std = float(values.std())
        return float(values.mean()), std if std > 0 else 1.0


def _parse_atom_line(line: str, lineno: int):
    tokens = line.split()
    if len(tokens) not in (4, 7):
        raise ParseError(
            f"line {lineno}: expected 'symbol x y z [fx fy fz]', got {len(tokens)} fields"
        )
    symbol = tokens[0]
    if symbol.lstrip("-").isdigit():
        z = int(symbol)
        if z < 1:
            raise ParseError(f"line {lineno}: bad element symbol {symbol!r}")
    else:
        try:
            z = symbol_to_z(symbol)
        except ValidationError:
            raise ParseError(f"line {lineno}: bad element symbol {symbol!r}") from None
    try:
        values = [float(t) for t in tokens[1:]]
    except ValueError:
        raise ParseError(f"line {lineno}: malformed coordinate") from None
    force = values[3:6] if len(values) == 6 else None
    return z, values[0:3], force


def load_extxyz(path: Union[str, Path]) -> Dataset:
    """Parse an extended-XYZ file into a Dataset.

    Each frame is an atom count line, a comment line of key=value pairs
    that must include ``energy=``, and one line per atom with an element
    symbol, coordinates, and optional force columns. Errors carry the
    offending line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    lines = path.read_text().splitlines()
    frames = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            n_atoms = int(lines[i].strip())
        except ValueError:
            raise ParseError(
                f"line {i + 1}: malformed atom count {lines[i].strip()!r}"
            ) from None
        if n_atoms < 1:
            raise ParseError(f"line {i + 1}: atom count must be positive")
        comment_no = i + 2
        if comment_no > len(lines):
            raise ParseError(f"line {comment_no}: missing comment line")
        energy = None
        try:
            tokens = shlex.split(lines[comment_no - 1])
        except ValueError:
            raise ParseError(f"line {comment_no}: unbalanced quoting") from None
        for token in tokens:
            if "=" not in token:
                continue
            key, _, value = token.partition("=")
            if key == "energy":
                try:
                    energy = float(value)
                except ValueError:
                    raise ParseError(
                        f"line {comment_no}: malformed energy value {value!r}"
                    ) from None
                if not np.isfinite(energy):
                    raise ParseError(
                        f"line {comment_no}: energy must be finite, got {value}"
                    )
        if energy is None:
            raise ParseError(f"line {comment_no}: missing energy key")
        species = np.empty(n_atoms, dtype=np.int64)
        positions = np.empty((n_atoms, 3))
        forces = np.empty((n_atoms, 3))
        saw_forces = 0
        for a in range(n_atoms):
            lineno = comment_no + 1 + a
            if lineno > len(lines):
                raise ParseError(f"line {lineno}: truncated frame")
            z, xyz, force = _parse_atom_line(lines[lineno - 1], lineno)
            species[a] = z
            positions[a] = xyz
            if force is not None:
                forces[a] = force
                saw_forces += 1
        if saw_forces not in (0, n_atoms):
            raise ParseError(
                f"line {comment_no}: frame mixes atom lines with and without forces"
            )
        frames.append(
            Frame(
                positions=positions,
                species=species,
                energy=energy,
                forces=forces if saw_forces else None,
            )
        )
        i = comment_no + n_atoms
    if not frames:
        raise ParseError("file contains no frames")
    return Dataset(frames)


def load_structure(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    """First frame of an XYZ file as (positions, species); energy optional."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError("empty structure file")
    try:
        n_atoms = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"line 1: malformed atom count {lines[0].strip()!r}") from None
    if len(lines) < 2 + n_atoms:
        raise ParseError("truncated structure file")
    species = np.empty(n_atoms, dtype=np.int64)
    positions = np.empty((n_atoms, 3))
    for a in range(n_atoms):
        z, xyz, _ = _parse_atom_line(lines[2 + a], 3 + a)
        species[a] = z
        positions[a] = xyz
    return positions, species


def write_extxyz(path: Union[str, Path], frames, extra_comment: str = "") -> None:
    """Write frames (any iterable of Frame) as extended XYZ."""
    with open(path, "w") as handle:
        for frame in frames:
            with_forces = frame.forces is not None
            props = "species:S:1:pos:R:3" + (":forces:R:3" if with_forces else "")
            comment = f"energy={float(frame.energy)!r} Properties={props}"
            if extra_comment:
                comment += " " + extra_comment
            handle.write(f"{frame.n_atoms}\n{comment}\n")
            for a in range(frame.n_atoms):
                sym = z_to_symbol(int(frame.species[a]))
                x, y, z = (float(v) for v in frame.positions[a])
                line = f"{sym} {x!r} {y!r} {z!r}"
                if with_forces:
                    fx, fy, fz = (float(v) for v in frame.forces[a])
                    line += f" {fx!r} {fy!r} {fz!r}"
                handle.write(line + "\n")


def _write_array(handle, name: str, array: np.ndarray) -> None:
    kind = array.dtype.kind
    if kind not in _CODE_FOR_KIND:
        raise ValidationError(f"unsupported dtype {array.dtype} for array {name!r}")
    code = _CODE_FOR_KIND[kind]
    data = np.ascontiguousarray(array.astype(_DTYPE_CODES[code], copy=False))
    encoded = name.encode("utf-8")
    handle.write(struct.pack("<H", len(encoded)))
    handle.write(encoded)
    handle.write(struct.pack("<BB", code, data.ndim))
    handle.write(struct.pack(f"<{data.ndim}Q", *data.shape))
    handle.write(data.tobytes())


def save_binary_container(dataset: Dataset, path: Union[str, Path]) -> None:
    """Companion writer for the container format.

    Uses the dense layout (pos [T,N,3], shared z) when every frame has
    the same size and species, and the ragged layout with frame offsets
    otherwise.
    """
    frames = list(dataset)
    if not frames:
        raise ValidationError("cannot save an empty dataset")
    n_with_forces = sum(1 for f in frames if f.forces is not None)
    if n_with_forces not in (0, len(frames)):
        raise ValidationError("cannot save a dataset with forces on only some frames")
    energies = np.array([f.energy for f in frames])
    uniform = all(
        f.n_atoms == frames[0].n_atoms and np.array_equal(f.species, frames[0].species)
        for f in frames
    )
    arrays: list[tuple[str, np.ndarray]] = []
    if uniform:
        arrays.append(("pos", np.stack([f.positions for f in frames])))
        arrays.append(("z", frames[0].species))
        arrays.append(("energy", energies))
        if n_with_forces:
            arrays.append(("forces", np.stack([f.forces for f in frames])))
    else:
        sizes = np.array([f.n_atoms for f in frames], dtype=np.int64)
        offsets = np.zeros(len(frames) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        arrays.append(("pos", np.concatenate([f.positions for f in frames])))
        arrays.append(("z", np.concatenate([f.species for f in frames])))
        arrays.append(("energy", energies))
        if n_with_forces:
            arrays.append(("forces", np.concatenate([f.forces for f in frames])))
        arrays.append(("frame_offsets", offsets))
    with open(path, "wb") as handle:
        handle.write(CONTAINER_MAGIC)
        handle.write(struct.pack("<I", len(arrays)))
        for name, array in arrays:
            _write_array(handle, name, array)


def _read_exact(handle, n_bytes: int, what: str) -> bytes:
    data = handle.read(n_bytes)
    if len(data) != n_bytes:
        raise DataError(f"truncated container while reading {what}")
    return data


def read_container_arrays(path: Union[str, Path]) -> dict:
    """Header scan plus one memmap per array; no payload is read eagerly."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    file_size = path.stat().st_size
    arrays = {}
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != CONTAINER_MAGIC:
            raise DataError(f"not a dataset container: {path}")
        (count,) = struct.unpack("<I", _read_exact(handle, 4, "array count"))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(handle, 2, "name length"))
            name = _read_exact(handle, name_len, "array name").decode("utf-8")
            code, rank = struct.unpack("<BB", _read_exact(handle, 2, "array header"))
            if code not in _DTYPE_CODES:
                raise DataError(f"unknown dtype code {code} for array {name!r}")
            shape = struct.unpack(
                f"<{rank}Q", _read_exact(handle, 8 * rank, "array shape")
            )
            dtype = np.dtype(_DTYPE_CODES[code])
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            offset = handle.tell()
            if offset + n_bytes > file_size:
                raise DataError(f"truncated array {name!r} in container")
            arrays[name] = np.memmap(
                path, dtype=dtype, mode="r", offset=offset, shape=tuple(shape)
            )
            handle.seek(n_bytes, 1)
    return arrays


def load_binary_container(path: Union[str, Path]) -> Dataset:
    """Open a container as a Dataset of lazily sliced frames."""
    arrays = read_container_arrays(path)
    for required in ("pos", "z", "energy"):
        if required not in arrays:
            raise DataError(f"container is missing required array {required!r}")
    pos = arrays["pos"]
    z = arrays["z"]
    energy = arrays["energy"]
    forces = arrays.get("forces")
    offsets = arrays.get("frame_offsets")
    if energy.ndim != 1:
        raise DataError("energy array must be one-dimensional")
    n_frames = energy.shape[0]
    frames = []
    if offsets is not None:
        if offsets.shape != (n_frames + 1,):
            raise DataError(
                f"frame_offsets must have {n_frames + 1} entries, got {offsets.shape}"
            )
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] != offsets[-1]:
            raise DataError("ragged pos array inconsistent with frame offsets")
        if z.shape != (pos.shape[0],):
            raise DataError("ragged z array inconsistent with pos")
        if forces is not None and forces.shape != pos.shape:
            raise DataError("forces array inconsistent with pos")
        for t in range(n_frames):
            lo, hi = int(offsets[t]), int(offsets[t + 1])
            frames.append(
                Frame(
                    positions=pos[lo:hi],
                    species=z[lo:hi],
                    energy=float(energy[t]),
                    forces=None if forces is None else forces[lo:hi],
                )
            )
    else:
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise DataError("dense pos array must have shape [frames, atoms, 3]")
        if pos.shape[0] != n_frames:
            raise DataError(
                f"energies array length {n_frames} does not match "
                f"{pos.shape[0]} frames"
            )
        if z.shape != (pos.shape[1],):
            raise DataError("shared z array inconsistent with pos")
        if forces is not None and forces.shape != pos.shape:
            raise DataError("forces array inconsistent with pos")
        for t in range(n_frames):
            frames.append(
                Frame(
                    positions=pos[t],
                    species=np.asarray(z),
                    energy=float(energy[t]),
                    forces=None if forces is None else forces[t],
                )
            )
    return Dataset(frames)


def _resolve_size(size, total: int, what: str) -> int:
    """Ints are counts; floats are fractions of the dataset, floored."""
    if isinstance(size, bool):
        raise ValidationError(f"{what} must be an int count or float fraction")
    if isinstance(size, float):
        if not 0.0 <= size <= 1.0:
            raise ValidationError(f"{what} fraction must lie in [0, 1], got {size}")
        return int(size * total)
    if isinstance(size, (int, np.integer)):
        return int(size)
    raise ValidationError(f"{what} must be an int count or float fraction")


def split(
    dataset, train_size, val_size, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint train/val/test index arrays; the remainder goes to test.

    Sizes can be counts or fractions (floored). Deterministic for a
    given seed.
    """
    total = len(dataset) if not isinstance(dataset, int) else dataset
    n_train = _resolve_size(train_size, total, "train_size")
    n_val = _resolve_size(val_size, total, "val_size")
    if n_train < 0 or n_val < 0 or n_train + n_val > total:
        raise ValidationError(
            f"infeasible split: train={n_train} val={n_val} of {total} frames"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(total)
    train = np.sort(perm[:n_train])
    val = np.sort(perm[n_train : n_train + n_val])
    test = np.sort(perm[n_train + n_val :])
    return train, val, test
