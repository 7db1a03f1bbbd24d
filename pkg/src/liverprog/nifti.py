"""File IO for volumes and masks.

Two formats are supported:

* NIfTI-1, plain ``.nii`` or gzipped ``.nii.gz`` (read volumes/masks, write
  masks and volumes). Only scalar 3D grids are handled; trailing singleton
  dimensions are squeezed.
* A dependency-free raw fixture format: ``<stem>.json`` sidecar holding
  ``{"dims", "spacing", "origin", "dtype"}`` next to ``<stem>.raw`` holding
  the little-endian voxel payload with x fastest-varying.

NIfTI offsets locate the *center* of voxel (0,0,0) while Volume3D.origin
is the volume corner, so offsets are shifted by half a voxel on read/write.
"""

from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from .volume import Mask3D, Volume3D

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# NIfTI datatype code -> numpy dtype
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class VolumeIOError(ValueError):
    """Base class for file-format failures."""


class BadMagicError(VolumeIOError):
    """The file does not carry a recognised magic number."""


class NonPositiveDimError(VolumeIOError):
    """The header declares a dimension or spacing <= 0."""


class TruncatedPayloadError(VolumeIOError):
    """The voxel payload is shorter than the header promises."""


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_nifti(path) -> Volume3D:
    """Read a NIfTI-1 file (.nii or .nii.gz) into a Volume3D."""
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayloadError(f"{path}: file shorter than a NIfTI-1 header")
    magic = raw[344:348]
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise BadMagicError(f"{path}: bad magic {magic!r}")

    # Little-endian first; fall back to big-endian if dim[0] is implausible.
    endian = "<"
    ndim = struct.unpack_from(endian + "h", raw, 40)[0]
    if not 1 <= ndim <= 7:
        endian = ">"
        ndim = struct.unpack_from(endian + "h", raw, 40)[0]
        if not 1 <= ndim <= 7:
            raise NonPositiveDimError(f"{path}: implausible dim[0] = {ndim}")

    dim = struct.unpack_from(endian + "8h", raw, 40)
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    datatype = struct.unpack_from(endian + "h", raw, 70)[0]
    vox_offset = int(struct.unpack_from(endian + "f", raw, 108)[0])
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", raw, 112)
    qoffset = struct.unpack_from(endian + "3f", raw, 268)

    shape = [int(d) for d in dim[1 : 1 + ndim]]
    if any(d <= 0 for d in shape):
        raise NonPositiveDimError(f"{path}: nonpositive dims {shape}")
    if len(shape) > 3:
        if any(d != 1 for d in shape[3:]):
            raise VolumeIOError(f"{path}: only scalar 3D volumes supported, dims {shape}")
        shape = shape[:3]
    while len(shape) < 3:
        shape.append(1)
    spacing = [float(p) for p in pixdim[1:4]]
    if any(s <= 0 for s in spacing):
        raise NonPositiveDimError(f"{path}: nonpositive pixdim {spacing}")

    if datatype not in _DTYPES:
        raise VolumeIOError(f"{path}: unsupported datatype code {datatype}")
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(endian)

    count = int(np.prod(shape))
    if vox_offset < HEADER_SIZE:
        vox_offset = HEADER_SIZE if magic == MAGIC_SINGLE else 0
    payload = raw[vox_offset : vox_offset + count * dtype.itemsize]
    if len(payload) < count * dtype.itemsize:
        raise TruncatedPayloadError(
            f"{path}: expected {count * dtype.itemsize} payload bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float64)
    if scl_slope not in (0.0, 1.0) or (scl_slope == 1.0 and scl_inter != 0.0):
        data = data * scl_slope + scl_inter
    voxels = data.reshape(shape, order="F")
    origin = tuple(float(q) - 0.5 * s for q, s in zip(qoffset, spacing))
    return Volume3D(voxels, tuple(spacing), origin)


def _nifti_header(dims, spacing, origin, datatype: int) -> bytes:
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, np.dtype(_DTYPES[datatype]).itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(HEADER_SIZE + 4))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    struct.pack_into("<b", hdr, 123, 2)  # spatial units: mm
    qoffset = [o + 0.5 * s for o, s in zip(origin, spacing)]
    struct.pack_into("<2h", hdr, 252, 1, 1)  # qform, sform codes
    struct.pack_into("<3f", hdr, 256, 0.0, 0.0, 0.0)
    struct.pack_into("<3f", hdr, 268, *qoffset)
    struct.pack_into("<4f", hdr, 280, spacing[0], 0, 0, qoffset[0])
    struct.pack_into("<4f", hdr, 296, 0, spacing[1], 0, qoffset[1])
    struct.pack_into("<4f", hdr, 312, 0, 0, spacing[2], qoffset[2])
    hdr[344:348] = MAGIC_SINGLE
    return bytes(hdr) + b"\x00\x00\x00\x00"  # empty extension segment


def _write_nifti_bytes(path: Path, header: bytes, payload: bytes) -> None:
    blob = header + payload
    if path.suffix == ".gz":
        # mtime=0 keeps the byte stream a pure function of the data, so
        # output digests reproduce across runs
        path.write_bytes(gzip.compress(blob, mtime=0))
    else:
        path.write_bytes(blob)


def write_nifti_volume(v: Volume3D, path) -> None:
    path = Path(path)
    header = _nifti_header(v.dims, v.spacing, v.origin, datatype=16)
    payload = np.asfortranarray(v.voxels.astype("<f4")).tobytes(order="F")
    _write_nifti_bytes(path, header, payload)


def write_nifti_mask(m: Mask3D, path) -> None:
    path = Path(path)
    header = _nifti_header(m.dims, m.spacing, m.origin, datatype=2)
    payload = np.asfortranarray(m.labels.astype(np.uint8)).tobytes(order="F")
    _write_nifti_bytes(path, header, payload)


def read_nifti_mask(path) -> Mask3D:
    v = read_nifti(path)
    return Mask3D(np.rint(v.voxels).astype(np.uint8), v.spacing, v.origin)


def read_raw_sidecar(path) -> Volume3D:
    """Read the raw fixture format: JSON sidecar + little-endian payload."""
    path = Path(path)
    if path.suffix == ".raw":
        header_path, raw_path = path.with_suffix(".json"), path
    else:
        header_path, raw_path = path, path.with_suffix(".raw")
    try:
        meta = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise BadMagicError(f"{header_path}: not a JSON sidecar ({exc})") from exc
    for key in ("dims", "dtype"):
        if key not in meta:
            raise VolumeIOError(f"{header_path}: missing {key!r}")
    dims = [int(d) for d in meta["dims"]]
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise NonPositiveDimError(f"{header_path}: bad dims {dims}")
    spacing = tuple(float(s) for s in meta.get("spacing", (1.0, 1.0, 1.0)))
    if any(s <= 0 for s in spacing):
        raise NonPositiveDimError(f"{header_path}: nonpositive spacing {spacing}")
    origin = tuple(float(o) for o in meta.get("origin", (0.0, 0.0, 0.0)))
    dtype = np.dtype(meta["dtype"]).newbyteorder("<")
    count = dims[0] * dims[1] * dims[2]
    payload = raw_path.read_bytes()
    if len(payload) < count * dtype.itemsize:
        raise TruncatedPayloadError(
            f"{raw_path}: expected {count * dtype.itemsize} bytes, got {len(payload)}"
        )
    voxels = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float64)
    return Volume3D(voxels.reshape(dims, order="F"), spacing, origin)


def write_raw_sidecar(v: Volume3D, path) -> None:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".raw") else path
    meta = {
        "dims": list(v.dims),
        "spacing": list(v.spacing),
        "origin": list(v.origin),
        "dtype": "float64",
    }
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    payload = v.voxels.astype("<f8").tobytes(order="F")
    stem.with_suffix(".raw").write_bytes(payload)


def load_volume(path) -> Volume3D:
    """Load a volume, dispatching on extension (.nii/.nii.gz vs .json/.raw)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    name = path.name.lower()
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        return read_nifti(path)
    if name.endswith(".json") or name.endswith(".raw"):
        return read_raw_sidecar(path)
    # Unknown extension: sniff for NIfTI, else raise on the magic.
    return read_nifti(path)
