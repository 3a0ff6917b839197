"""Grouping randomized MAC addresses of one physical device.

Mobile devices broadcast model-specific fields in probe requests that stay
constant across MAC rotations.  Each MAC's fields are hashed into a
fixed-width binary fingerprint, and MACs whose fingerprints sit at Hamming
distance zero are merged into one bucket via a metric ball tree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .capture import FrameKind, PacketRecord

FINGERPRINT_WIDTH = 256
_WORDS = FINGERPRINT_WIDTH // 64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class UnfingerprintableError(ValueError):
    """No probe-request model information available for a MAC."""


class FingerprintWidthError(ValueError):
    """Fingerprints of inconsistent widths were mixed in one query."""


def fnv1a64(data: bytes) -> int:
    """Public 64-bit FNV-1a hash used for fingerprint bit placement."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class FingerprintVector:
    """Fixed-width binary fingerprint, packed little-endian (bit i lives in
    ``bits[i // 8]`` at position ``i % 8``)."""

    bits: bytes

    @property
    def width(self) -> int:
        return len(self.bits) * 8

    @classmethod
    def zero(cls, width: int = FINGERPRINT_WIDTH) -> "FingerprintVector":
        return cls(bytes(width // 8))

    @classmethod
    def from_model_info(cls, pairs: Iterable[tuple[int, bytes]],
                        width: int = FINGERPRINT_WIDTH) -> "FingerprintVector":
        """Deterministic encoding: pairs are deduplicated, sorted by
        (tag_id, value), and each sets bit fnv1a64(tag || value) mod width."""
        buf = bytearray(width // 8)
        for tag, value in sorted(set((int(t), bytes(v)) for t, v in pairs)):
            idx = fnv1a64(tag.to_bytes(2, "big") + value) % width
            buf[idx // 8] |= 1 << (idx % 8)
        return cls(bytes(buf))

    @classmethod
    def from_hex(cls, text: str) -> "FingerprintVector":
        return cls(bytes.fromhex(text))

    def to_hex(self) -> str:
        return self.bits.hex()

    def hamming(self, other: "FingerprintVector") -> int:
        if len(self.bits) != len(other.bits):
            raise FingerprintWidthError(
                f"width mismatch: {self.width} vs {other.width}")
        return (int.from_bytes(self.bits, "little")
                ^ int.from_bytes(other.bits, "little")).bit_count()

    def contains(self, fragment: "FingerprintVector") -> bool:
        """Bit-subset test: every set bit of the fragment is set here."""
        a = int.from_bytes(self.bits, "little")
        b = int.from_bytes(fragment.bits, "little")
        return a & b == b

    def bit_indices(self) -> list[int]:
        value = int.from_bytes(self.bits, "little")
        return [i for i in range(self.width) if (value >> i) & 1]


@dataclass
class MacBucket:
    """A set of MAC addresses sharing one bit-identical fingerprint."""

    fingerprint: FingerprintVector
    macs: frozenset[str]


def extract_fingerprint(records: Sequence[PacketRecord],
                        width: int = FINGERPRINT_WIDTH) -> FingerprintVector:
    """Build the fingerprint of one MAC from its probe-request records.

    Raises UnfingerprintableError when no record carries model information;
    the caller leaves such MACs unclustered.
    """
    pairs: list[tuple[int, bytes]] = []
    for r in records:
        if r.frame_kind is FrameKind.PROBE_REQ and r.model_info:
            pairs.extend(r.model_info)
    if not pairs:
        raise UnfingerprintableError("no probe-request model_info present")
    return FingerprintVector.from_model_info(pairs, width=width)


class HammingBallTree:
    """Ball tree over packed bit vectors under Hamming distance.

    Leaves hold up to ``leaf_size`` points; internal nodes split on the point
    farthest from the node centroid (majority-bit vector) and the point
    farthest from that one, partitioning by nearest pivot.
    """

    def __init__(self, vectors: np.ndarray, leaf_size: int = 16):
        if vectors.ndim != 2 or vectors.dtype != np.uint64:
            raise ValueError("expected an (n, words) uint64 array")
        self.vectors = vectors
        self.leaf_size = leaf_size
        self._root = self._build(np.arange(len(vectors))) if len(vectors) else None

    def _distances(self, vec: np.ndarray, idx: np.ndarray) -> np.ndarray:
        xor = self.vectors[idx] ^ vec
        return np.bitwise_count(xor).sum(axis=1).astype(np.int64)

    def _centroid(self, idx: np.ndarray) -> np.ndarray:
        # Majority bit per position minimizes total Hamming distance.
        bits = np.unpackbits(self.vectors[idx].view(np.uint8), axis=1)
        majority = (bits.sum(axis=0) * 2 >= len(idx)).astype(np.uint8)
        return np.packbits(majority).view(np.uint64)

    def _build(self, idx: np.ndarray) -> dict:
        centroid = self._centroid(idx)
        radius = int(self._distances(centroid, idx).max())
        node = {"center": centroid, "radius": radius}
        if len(idx) <= self.leaf_size:
            node["points"] = idx
            return node
        d_centroid = self._distances(centroid, idx)
        p1 = idx[int(d_centroid.argmax())]
        d_p1 = self._distances(self.vectors[p1], idx)
        p2 = idx[int(d_p1.argmax())]
        d_p2 = self._distances(self.vectors[p2], idx)
        left_mask = d_p1 <= d_p2
        # Degenerate split (all identical or one-sided): fall back to halves.
        if left_mask.all() or not left_mask.any():
            half = len(idx) // 2
            left_mask = np.zeros(len(idx), dtype=bool)
            left_mask[:half] = True
        node["left"] = self._build(idx[left_mask])
        node["right"] = self._build(idx[~left_mask])
        return node

    def query_radius(self, vec: np.ndarray, radius: int = 0) -> np.ndarray:
        """Indices of all points within ``radius`` of ``vec`` (sorted)."""
        if self._root is None:
            return np.empty(0, dtype=np.int64)
        out: list[np.ndarray] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            d_center = int(np.bitwise_count(node["center"] ^ vec).sum())
            if d_center > node["radius"] + radius:
                continue
            if "points" in node:
                pts = node["points"]
                dists = self._distances(vec, pts)
                out.append(pts[dists <= radius])
            else:
                stack.append(node["left"])
                stack.append(node["right"])
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(out))


def cluster(fingerprints: Mapping[str, FingerprintVector],
            leaf_size: int = 16) -> list[MacBucket]:
    """Bucket MACs whose fingerprints match at Hamming distance zero.

    Builds a ball tree over all fingerprints, queries radius 0 around each
    leaf, and merges identical neighbour sets into buckets.  Buckets
    partition the input MACs and are ordered by their smallest MAC.
    """
    if not fingerprints:
        return []
    widths = {fp.width for fp in fingerprints.values()}
    if len(widths) != 1:
        raise FingerprintWidthError(f"mixed fingerprint widths: {sorted(widths)}")
    macs = sorted(fingerprints)
    words = next(iter(widths)) // 64
    matrix = np.zeros((len(macs), words), dtype=np.uint64)
    for i, mac in enumerate(macs):
        matrix[i] = np.frombuffer(fingerprints[mac].bits, dtype="<u8")
    tree = HammingBallTree(matrix, leaf_size=leaf_size)
    groups: dict[tuple[int, ...], list[int]] = {}
    for i in range(len(macs)):
        neighbours = tuple(int(j) for j in tree.query_radius(matrix[i], 0))
        groups.setdefault(neighbours, []).append(i)
    buckets = []
    for neighbours in groups:
        members = frozenset(macs[j] for j in neighbours)
        buckets.append(MacBucket(fingerprint=fingerprints[macs[neighbours[0]]],
                                 macs=members))
    buckets.sort(key=lambda b: min(b.macs))
    return buckets


def bucket_report(buckets: Sequence[MacBucket]) -> str:
    """CSV report: one row per bucket, MACs sorted and ``|``-separated."""
    lines = ["bucket_id,macs"]
    for i, bucket in enumerate(buckets):
        lines.append(f"{i},{'|'.join(sorted(bucket.macs))}")
    return "\n".join(lines) + "\n"
