"""Binary containers for DNS snapshots and training pairs.

Snapshot files ("LESNAP01"): header {version u32 = 1, grid n u32,
components u32, time f64}, then complex double pairs (re, im) in axis order
(component, k1, k2, k3) with k3 fastest.  Pair files ("LESSFS01"): header
{version u32, les n u32, time f64}, then the filtered velocity as three
spectral components followed by the deviatoric SFS as six physical
components in the order 11, 22, 33, 12, 13, 23.  Everything little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .filtering import SnapshotPair

SNAP_MAGIC = b"LESNAP01"
PAIR_MAGIC = b"LESSFS01"
VERSION = 1


def write_snapshot(path, t: float, u_hat: np.ndarray) -> None:
    components, n = u_hat.shape[0], u_hat.shape[-1]
    if u_hat.shape != (components, n, n, n):
        raise ValueError("snapshot payload must be (components, n, n, n)")
    with open(path, "wb") as fh:
        fh.write(SNAP_MAGIC)
        fh.write(struct.pack("<IIId", VERSION, n, components, float(t)))
        fh.write(np.ascontiguousarray(u_hat, dtype="<c16").tobytes())


def _read_exact(fh, size: int, path) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise ValueError(f"{path}: truncated header")
    return data


def read_snapshot(path) -> tuple[float, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(8) != SNAP_MAGIC:
            raise ValueError(f"{path}: bad snapshot magic")
        version, n, components, t = struct.unpack("<IIId", _read_exact(fh, 20, path))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        payload = fh.read()
    expected = 16 * components * n**3
    if len(payload) != expected:
        raise ValueError(f"{path}: truncated snapshot payload")
    u_hat = np.frombuffer(payload, dtype="<c16").reshape(components, n, n, n)
    return t, u_hat.astype(np.complex128)


def write_pair(path, pair: SnapshotPair) -> None:
    n = pair.u_bar.shape[-1]
    with open(path, "wb") as fh:
        fh.write(PAIR_MAGIC)
        fh.write(struct.pack("<IId", VERSION, n, float(pair.t)))
        fh.write(np.ascontiguousarray(pair.u_bar, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(pair.tau_dev, dtype="<f8").tobytes())


def read_pair(path) -> SnapshotPair:
    with open(path, "rb") as fh:
        if fh.read(8) != PAIR_MAGIC:
            raise ValueError(f"{path}: bad pair magic")
        version, n, t = struct.unpack("<IId", _read_exact(fh, 16, path))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported pair version {version}")
        u_size = 16 * 3 * n**3
        tau_size = 8 * 6 * n**3
        u_raw = fh.read(u_size)
        tau_raw = fh.read(tau_size)
    if len(u_raw) != u_size or len(tau_raw) != tau_size:
        raise ValueError(f"{path}: truncated pair payload")
    u_bar = np.frombuffer(u_raw, dtype="<c16").reshape(3, n, n, n)
    tau = np.frombuffer(tau_raw, dtype="<f8").reshape(6, n, n, n)
    return SnapshotPair(
        t=t, u_bar=u_bar.astype(np.complex128), tau_dev=tau.astype(np.float64)
    )


def sorted_files(directory, pattern: str) -> list[Path]:
    return sorted(Path(directory).glob(pattern))
