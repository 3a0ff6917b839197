"""Encrypted at-rest device store.

A single append-only log file of AES-256-GCM blobs.  Each record keeps only
the owning bucket id in plaintext (so the index can be rebuilt by scanning);
everything else, including the record kind, lives inside the authenticated
ciphertext with the bucket id bound as associated data.

Erasure overwrites a bucket's records in place with cryptographically random
bytes and flags them dead; the bytes are unrecoverable and subsequent scans
skip the carcasses.

Record layout after the 6-byte file header (magic ``TWLG`` + u16 version):

    u32 body_len | u8 flags | u16 id_len | bucket_id | 12B nonce | ct||tag
"""

from __future__ import annotations

import json
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

MAGIC = b"TWLG"
VERSION = 1
_FLAG_ERASED = 0x01
_NONCE_LEN = 12


class StoreError(RuntimeError):
    pass


class StoreIntegrityError(StoreError):
    """Ciphertext failed authentication; the store refuses to serve it."""


class BucketNotFoundError(KeyError):
    pass


def key_from_hex(text: str) -> bytes:
    key = bytes.fromhex(text.strip())
    if len(key) != 32:
        raise ValueError("storage key must be 64 hex characters (32 bytes)")
    return key


@dataclass
class _Entry:
    offset: int        # file offset of the u32 length prefix
    body_len: int
    kind: str
    data: dict


class DeviceStore:
    """Append-only encrypted record store with overwrite erasure."""

    def __init__(self, path: str | Path, key: bytes):
        if len(key) != 32:
            raise ValueError("AES-256 key must be 32 bytes")
        self.path = Path(path)
        self._aead = AESGCM(key)
        self._lock = threading.RLock()
        self._index: dict[str, list[_Entry]] = {}
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "wb") as fh:
                fh.write(MAGIC + struct.pack("<H", VERSION))
        self._fh = open(self.path, "r+b")
        self._scan()

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def __enter__(self) -> "DeviceStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- scanning ---------------------------------------------------------

    def _scan(self) -> None:
        fh = self._fh
        fh.seek(0)
        head = fh.read(6)
        if head[:4] != MAGIC:
            raise StoreError(f"{self.path} is not a device store")
        while True:
            offset = fh.tell()
            raw_len = fh.read(4)
            if len(raw_len) < 4:
                break
            (body_len,) = struct.unpack("<I", raw_len)
            body = fh.read(body_len)
            if len(body) < body_len:
                raise StoreError("truncated record at end of store")
            flags = body[0]
            if flags & _FLAG_ERASED:
                continue
            (id_len,) = struct.unpack("<H", body[1:3])
            bucket_id = body[3:3 + id_len].decode("utf-8")
            nonce = body[3 + id_len:3 + id_len + _NONCE_LEN]
            ct = body[3 + id_len + _NONCE_LEN:]
            try:
                plain = self._aead.decrypt(nonce, ct, bucket_id.encode("utf-8"))
            except InvalidTag as exc:
                raise StoreIntegrityError(
                    f"record at offset {offset} failed authentication") from exc
            payload = json.loads(plain.decode("utf-8"))
            entry = _Entry(offset=offset, body_len=body_len,
                           kind=payload["kind"], data=payload["data"])
            self._index.setdefault(bucket_id, []).append(entry)

    # -- writing ----------------------------------------------------------

    def append(self, bucket_id: str, kind: str, data: dict) -> None:
        payload = json.dumps({"kind": kind, "data": data},
                             separators=(",", ":")).encode("utf-8")
        nonce = os.urandom(_NONCE_LEN)
        ct = self._aead.encrypt(nonce, payload, bucket_id.encode("utf-8"))
        ident = bucket_id.encode("utf-8")
        body = struct.pack("<BH", 0, len(ident)) + ident + nonce + ct
        with self._lock:
            self._fh.seek(0, os.SEEK_END)
            offset = self._fh.tell()
            self._fh.write(struct.pack("<I", len(body)))
            self._fh.write(body)
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._index.setdefault(bucket_id, []).append(
                _Entry(offset=offset, body_len=len(body), kind=kind, data=data))

    # -- reading ----------------------------------------------------------

    def buckets(self) -> list[str]:
        with self._lock:
            return sorted(self._index)

    def has_bucket(self, bucket_id: str) -> bool:
        with self._lock:
            return bucket_id in self._index

    def records(self, bucket_id: str) -> list[tuple[str, dict]]:
        with self._lock:
            if bucket_id not in self._index:
                raise BucketNotFoundError(bucket_id)
            return [(e.kind, e.data) for e in self._index[bucket_id]]

    def records_of_kind(self, bucket_id: str, kind: str) -> list[dict]:
        return [data for k, data in self.records(bucket_id) if k == kind]

    def blob_ranges(self, bucket_id: str) -> list[tuple[int, int]]:
        """(offset, length) of each record body; exposed for erasure audits."""
        with self._lock:
            if bucket_id not in self._index:
                raise BucketNotFoundError(bucket_id)
            return [(e.offset + 4, e.body_len) for e in self._index[bucket_id]]

    # -- erasure ----------------------------------------------------------

    def erase(self, bucket_id: str) -> dict:
        """Overwrite every record of the bucket with random bytes in place,
        flag them erased, and drop the index rows.  Returns a receipt."""
        with self._lock:
            if bucket_id not in self._index:
                raise BucketNotFoundError(bucket_id)
            entries = self._index.pop(bucket_id)
            total = 0
            for e in entries:
                # Keep the length prefix so later scans still skip cleanly,
                # randomize everything else, then set the erased flag.
                self._fh.seek(e.offset + 4)
                self._fh.write(bytes([_FLAG_ERASED]))
                self._fh.write(os.urandom(e.body_len - 1))
                total += e.body_len - 1
            self._fh.flush()
            os.fsync(self._fh.fileno())
            return {"bucket_id": bucket_id, "blobs": len(entries),
                    "bytes_overwritten": total}
