"""Beamforming-weight computation, Givens compression, and feature assembly.

The STA computes per-subcarrier right-singular matrices of the channel,
compresses them into quantized Givens angles (phi column phases, psi rotation
angles) the way 802.11ac compressed beamforming feedback does, and the
capture side rebuilds the matrices and concatenates a sliding window of them
into flat real feature vectors.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import ChannelMatrix

DEFAULT_PHI_BITS = 7
DEFAULT_PSI_BITS = 5

_DATASET_MAGIC = b"BLDS"
_DATASET_VERSION = 1


@dataclass(frozen=True)
class BFWMatrix:
    """Per-subcarrier beamforming weights, v[k] is M x S with S retained streams."""

    v: np.ndarray  # complex, shape (K, M, S)

    @property
    def n_subcarriers(self) -> int:
        return self.v.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.v.shape


@dataclass(frozen=True)
class CompressedBFW:
    """Quantized Givens angle codewords per subcarrier."""

    phi_codes: np.ndarray  # int, shape (K, n_phi)
    psi_codes: np.ndarray  # int, shape (K, n_psi)
    m: int
    s: int
    phi_bits: int
    psi_bits: int

    def __post_init__(self) -> None:
        n_phi, n_psi = angle_counts(self.m, self.s)
        if self.phi_codes.shape[1] != n_phi or self.psi_codes.shape[1] != n_psi:
            raise ValueError("codeword counts do not match the (M, S) Givens size")
        if np.any(self.phi_codes < 0) or np.any(self.phi_codes >= 2 ** self.phi_bits):
            raise ValueError("phi codeword out of range")
        if np.any(self.psi_codes < 0) or np.any(self.psi_codes >= 2 ** self.psi_bits):
            raise ValueError("psi codeword out of range")


@dataclass(frozen=True)
class FeatureVector:
    """Flat real feature with its window metadata."""

    values: np.ndarray
    p: int
    area_label: int | None = None
    position: tuple[float, float] | None = None


def angle_counts(m: int, s: int) -> tuple[int, int]:
    """Number of (phi, psi) angles in the Givens decomposition of an M x S matrix."""
    n = sum(m - i for i in range(1, min(s, m - 1) + 1))
    return n, n


def phase_normalize(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its last element is real non-negative."""
    last = v[-1, :]
    phase = np.where(np.abs(last) > 0, np.exp(-1j * np.angle(last)), 1.0)
    return v * phase[np.newaxis, :]


def compute_bfw(channel: ChannelMatrix) -> BFWMatrix:
    """First S = min(M, N) right-singular vectors of each H_k.

    Columns are ordered by descending singular value (exact ties broken by the
    lexicographically larger phase-normalized column) and phase-normalized so
    the last element of each column is real non-negative.
    """
    k, n, m = channel.shape
    s = min(m, n)
    out = np.empty((k, m, s), dtype=complex)
    for ki in range(k):
        hk = channel.h[ki]
        if not np.all(np.isfinite(hk)):
            raise ValueError(f"channel matrix at subcarrier {ki + 1} is not finite")
        try:
            _, sv, vh = np.linalg.svd(hk)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"SVD failed at subcarrier {ki + 1}: {exc}") from exc
        v = phase_normalize(vh.conj().T[:, :s])
        v = _order_degenerate_columns(v, sv[:s])
        out[ki] = v
    return BFWMatrix(v=out)


def _order_degenerate_columns(v: np.ndarray, singular_values: np.ndarray) -> np.ndarray:
    """Reorder columns within groups of exactly equal singular values."""
    order = list(range(v.shape[1]))
    start = 0
    while start < len(order):
        end = start
        while end + 1 < len(order) and singular_values[end + 1] == singular_values[start]:
            end += 1
        if end > start:
            block = sorted(order[start:end + 1],
                           key=lambda c: _column_key(v[:, c]), reverse=True)
            order[start:end + 1] = block
        start = end + 1
    return v[:, order]


def _column_key(col: np.ndarray) -> tuple:
    return tuple(x for e in col for x in (e.real, e.imag))


def givens_angles(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decompose a phase-normalized M x S matrix into Givens (phi, psi) angles.

    phi are column phases in [0, 2 pi), psi rotation angles in [0, pi/2], in
    the standard order: for each column i, the phases of rows i..M-1 followed
    by the rotations zeroing rows i+1..M.
    """
    w = v.astype(complex).copy()
    m, s = w.shape
    phis: list[float] = []
    psis: list[float] = []
    for i in range(min(s, m - 1)):
        col_phase = np.angle(w[i:m - 1, i])
        phis.extend(float(p) % (2 * np.pi) for p in col_phase)
        w[i:m - 1, :] *= np.exp(-1j * col_phase)[:, np.newaxis]
        for l in range(i + 1, m):
            a = w[i, i].real
            b = w[l, i].real
            psi = float(np.arctan2(max(b, 0.0), max(a, 0.0)))
            psis.append(psi)
            c, sn = np.cos(psi), np.sin(psi)
            row_i = c * w[i, :] + sn * w[l, :]
            row_l = -sn * w[i, :] + c * w[l, :]
            w[i, :] = row_i
            w[l, :] = row_l
    return np.array(phis), np.array(psis)


def rebuild_from_angles(phis: np.ndarray, psis: np.ndarray, m: int, s: int) -> np.ndarray:
    """Inverse of givens_angles: apply the Givens product to the M x S identity."""
    n_phi, n_psi = angle_counts(m, s)
    if len(phis) != n_phi or len(psis) != n_psi:
        raise ValueError("angle counts do not match the (M, S) Givens size")
    w = np.zeros((m, s), dtype=complex)
    w[:s, :s] = np.eye(s)
    # Factor blocks are applied right-to-left: innermost rotations first.
    starts = np.cumsum([0] + [m - i for i in range(1, min(s, m - 1))])
    for i in reversed(range(min(s, m - 1))):
        base = int(starts[i])
        for li, l in enumerate(reversed(range(i + 1, m))):
            psi = psis[base + (m - i - 2 - li)]
            c, sn = np.cos(psi), np.sin(psi)
            row_i = c * w[i, :] - sn * w[l, :]
            row_l = sn * w[i, :] + c * w[l, :]
            w[i, :] = row_i
            w[l, :] = row_l
        col_phase = phis[base:base + (m - 1 - i)]
        w[i:m - 1, :] *= np.exp(1j * np.asarray(col_phase))[:, np.newaxis]
    return w


def quantize_phi(phi: np.ndarray, bits: int) -> np.ndarray:
    step = np.pi / 2 ** (bits - 1)
    codes = np.floor(np.asarray(phi) / step).astype(int)
    return np.clip(codes, 0, 2 ** bits - 1)


def dequantize_phi(codes: np.ndarray, bits: int) -> np.ndarray:
    return np.pi * np.asarray(codes) / 2 ** (bits - 1) + np.pi / 2 ** bits


def quantize_psi(psi: np.ndarray, bits: int) -> np.ndarray:
    step = np.pi / 2 ** (bits + 1)
    codes = np.floor(np.asarray(psi) / step).astype(int)
    return np.clip(codes, 0, 2 ** bits - 1)


def dequantize_psi(codes: np.ndarray, bits: int) -> np.ndarray:
    return np.pi * np.asarray(codes) / 2 ** (bits + 1) + np.pi / 2 ** (bits + 2)


def compress_bfw(bfw: BFWMatrix, phi_bits: int = DEFAULT_PHI_BITS,
                 psi_bits: int = DEFAULT_PSI_BITS) -> CompressedBFW:
    """Givens-decompose and uniformly quantize every subcarrier's BFW matrix.

    Column phases are re-normalized first, so the output is invariant to
    per-column unit-phase factors on the input.
    """
    k, m, s = bfw.shape
    n_phi, n_psi = angle_counts(m, s)
    phi_codes = np.empty((k, n_phi), dtype=int)
    psi_codes = np.empty((k, n_psi), dtype=int)
    for ki in range(k):
        v = bfw.v[ki]
        norms = np.linalg.norm(v, axis=0)
        if not np.all(np.isfinite(v)) or np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError(
                f"subcarrier {ki + 1}: BFW columns must be unit-norm singular vectors")
        phis, psis = givens_angles(phase_normalize(v))
        phi_codes[ki] = quantize_phi(phis, phi_bits)
        psi_codes[ki] = quantize_psi(psis, psi_bits)
    return CompressedBFW(phi_codes=phi_codes, psi_codes=psi_codes, m=m, s=s,
                         phi_bits=phi_bits, psi_bits=psi_bits)


def reconstruct_bfw(compressed: CompressedBFW) -> BFWMatrix:
    """Rebuild per-subcarrier BFW matrices from dequantized angle codewords."""
    k = compressed.phi_codes.shape[0]
    out = np.empty((k, compressed.m, compressed.s), dtype=complex)
    for ki in range(k):
        phis = dequantize_phi(compressed.phi_codes[ki], compressed.phi_bits)
        psis = dequantize_psi(compressed.psi_codes[ki], compressed.psi_bits)
        out[ki] = rebuild_from_angles(phis, psis, compressed.m, compressed.s)
    return BFWMatrix(v=out)


def concatenate(sequence: Sequence[BFWMatrix], p: int, u: int,
                area_label: int | None = None,
                position: tuple[float, float] | None = None) -> FeatureVector:
    """Flatten the BFW window for time instances p-(U-1)..p into one feature.

    p is 1-based; ordering is time-major, then subcarrier, then column, then
    row, with the real part before the imaginary part of each element, for a
    total length of 2*M*S*K*U.
    """
    if u < 1:
        raise ValueError("u must be >= 1")
    if p < u:
        raise ValueError(f"window end p={p} needs at least U={u} snapshots of history")
    if len(sequence) < p:
        raise ValueError(f"sequence holds {len(sequence)} snapshots, need at least {p}")
    window = sequence[p - u:p]
    parts = []
    for bfw in window:
        # (K, M, S) -> (K, S, M) so rows vary fastest within a column.
        arr = np.transpose(bfw.v, (0, 2, 1)).reshape(-1)
        parts.append(np.column_stack([arr.real, arr.imag]).reshape(-1))
    values = np.concatenate(parts)
    return FeatureVector(values=values, p=p, area_label=area_label, position=position)


def unflatten(feature: FeatureVector, m: int, s: int, k: int, u: int) -> np.ndarray:
    """Recover the (U, K, M, S) complex window from a flat feature vector."""
    expected = 2 * m * s * k * u
    if feature.values.size != expected:
        raise ValueError(f"feature length {feature.values.size}, expected {expected}")
    pairs = feature.values.reshape(u, k, s, m, 2)
    complex_arr = pairs[..., 0] + 1j * pairs[..., 1]
    return np.transpose(complex_arr, (0, 1, 3, 2))


def feature_length(m: int, s: int, k: int, u: int) -> int:
    return 2 * m * s * k * u


def write_dataset(path: str | Path, features: Sequence[FeatureVector]) -> None:
    """Write features as packed little-endian float64 records.

    16-byte header: magic 'BLDS', uint32 version, uint32 record length (number
    of float64 values per record), uint32 reserved. Each record holds
    p, area_label, x, y followed by the feature values; missing labels and
    positions are stored as NaN.
    """
    if not features:
        raise ValueError("cannot write an empty dataset")
    dim = features[0].values.size
    record_len = 4 + dim
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIII", _DATASET_MAGIC, _DATASET_VERSION, record_len, 0))
        for feat in features:
            if feat.values.size != dim:
                raise ValueError("all features in a dataset must share one length")
            x, y = feat.position if feat.position is not None else (np.nan, np.nan)
            label = float(feat.area_label) if feat.area_label is not None else np.nan
            head = np.array([float(feat.p), label, x, y], dtype="<f8")
            f.write(head.tobytes())
            f.write(feat.values.astype("<f8").tobytes())


def read_dataset(path: str | Path) -> list[FeatureVector]:
    """Read a packed feature dataset written by write_dataset."""
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16:
            raise ValueError("truncated dataset header")
        magic, version, record_len, _ = struct.unpack("<4sIII", header)
        if magic != _DATASET_MAGIC:
            raise ValueError("not a feature dataset file")
        if version != _DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        payload = f.read()
    data = np.frombuffer(payload, dtype="<f8")
    if data.size % record_len != 0:
        raise ValueError("dataset payload does not divide into whole records")
    records = data.reshape(-1, record_len)
    features = []
    for row in records:
        label = None if np.isnan(row[1]) else int(row[1])
        position = None if np.isnan(row[2]) else (float(row[2]), float(row[3]))
        features.append(FeatureVector(values=row[4:].copy(), p=int(row[0]),
                                      area_label=label, position=position))
    return features


def write_dataset_csv(path: str | Path, features: Sequence[FeatureVector]) -> None:
    """CSV twin of write_dataset: p, area_label, x, y, then the feature values."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        for feat in features:
            x, y = feat.position if feat.position is not None else ("", "")
            label = feat.area_label if feat.area_label is not None else ""
            writer.writerow([feat.p, label, x, y] + [repr(v) for v in feat.values])
