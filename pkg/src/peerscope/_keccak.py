"""Keccak-256 (original padding, as used for node-ID hashing in discv4).

Note this is Keccak with 0x01 domain padding, not NIST SHA3-256 (0x06), so
``hashlib.sha3_256`` is not a substitute. Pure-Python f[1600] permutation,
unrolled per round; fast enough for preimage crafting at the depths the
crawler addresses (top ~16 buckets of a remote table).
"""

from __future__ import annotations

_MASK = (1 << 64) - 1

_ROUND_CONSTANTS = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)

# Canonical rotation offsets r[x][y], flattened as _ROT[5*x + y].
_ROT = (
    0, 36, 3, 41, 18,
    1, 44, 10, 45, 2,
    62, 6, 43, 15, 61,
    28, 55, 25, 21, 56,
    27, 20, 39, 8, 14,
)

# rho+pi as flat triples: B[dst] = rot64(A[src], r). Lane (x, y) lives at
# flat index x + 5*y; pi sends (x, y) to (y, (2x + 3y) % 5).
_RHO_PI = tuple(
    (x + 5 * y, _ROT[5 * x + y], y + 5 * ((2 * x + 3 * y) % 5))
    for x in range(5)
    for y in range(5)
    if _ROT[5 * x + y]  # src 0 -> dst 0 with rot 0 handled implicitly
)

_RATE = 136  # bytes, for capacity 512 / 256-bit output


def _keccak_f(s: list[int]) -> None:
    b = [0] * 25
    for rc in _ROUND_CONSTANTS:
        # theta
        c0 = s[0] ^ s[5] ^ s[10] ^ s[15] ^ s[20]
        c1 = s[1] ^ s[6] ^ s[11] ^ s[16] ^ s[21]
        c2 = s[2] ^ s[7] ^ s[12] ^ s[17] ^ s[22]
        c3 = s[3] ^ s[8] ^ s[13] ^ s[18] ^ s[23]
        c4 = s[4] ^ s[9] ^ s[14] ^ s[19] ^ s[24]
        d0 = c4 ^ (((c1 << 1) | (c1 >> 63)) & _MASK)
        d1 = c0 ^ (((c2 << 1) | (c2 >> 63)) & _MASK)
        d2 = c1 ^ (((c3 << 1) | (c3 >> 63)) & _MASK)
        d3 = c2 ^ (((c4 << 1) | (c4 >> 63)) & _MASK)
        d4 = c3 ^ (((c0 << 1) | (c0 >> 63)) & _MASK)
        s[0] ^= d0; s[5] ^= d0; s[10] ^= d0; s[15] ^= d0; s[20] ^= d0
        s[1] ^= d1; s[6] ^= d1; s[11] ^= d1; s[16] ^= d1; s[21] ^= d1
        s[2] ^= d2; s[7] ^= d2; s[12] ^= d2; s[17] ^= d2; s[22] ^= d2
        s[3] ^= d3; s[8] ^= d3; s[13] ^= d3; s[18] ^= d3; s[23] ^= d3
        s[4] ^= d4; s[9] ^= d4; s[14] ^= d4; s[19] ^= d4; s[24] ^= d4
        # rho + pi
        b[0] = s[0]
        for src, r, dst in _RHO_PI:
            lane = s[src]
            b[dst] = ((lane << r) | (lane >> (64 - r))) & _MASK
        # chi (rows are 5 consecutive flat indices)
        for y in (0, 5, 10, 15, 20):
            b0 = b[y]; b1 = b[y + 1]; b2 = b[y + 2]; b3 = b[y + 3]; b4 = b[y + 4]
            s[y] = b0 ^ (~b1 & b2)
            s[y + 1] = b1 ^ (~b2 & b3)
            s[y + 2] = b2 ^ (~b3 & b4)
            s[y + 3] = b3 ^ (~b4 & b0)
            s[y + 4] = b4 ^ (~b0 & b1)
        # iota
        s[0] ^= rc


def keccak256(data: bytes) -> bytes:
    padded = bytearray(data)
    pad_len = _RATE - (len(padded) % _RATE)
    padded += b"\x01" + b"\x00" * (pad_len - 1)
    padded[-1] ^= 0x80

    state = [0] * 25
    from_bytes = int.from_bytes
    for block_start in range(0, len(padded), _RATE):
        for i in range(17):  # _RATE // 8 lanes
            off = block_start + 8 * i
            state[i] ^= from_bytes(padded[off : off + 8], "little")
        _keccak_f(state)

    return b"".join(state[i].to_bytes(8, "little") for i in range(4))


def keccak256_many(keys: list[bytes]) -> list[bytes]:
    """Hash a batch of 32-byte keys; identical output to keccak256.

    Vectorized over the batch with numpy, which is what makes preimage
    crafting into deep buckets (~2^16 candidates) affordable in Python.
    """
    import numpy as np

    n = len(keys)
    if n == 0:
        return []
    if any(len(k) != 32 for k in keys):
        raise ValueError("batch path requires 32-byte keys")
    u64 = np.uint64
    lanes = np.frombuffer(b"".join(keys), dtype="<u8").reshape(n, 4)
    # single 136-byte block: key, 0x01 pad at byte 32, 0x80 at byte 135
    s = [np.zeros(n, dtype=np.uint64) for _ in range(25)]
    for i in range(4):
        s[i] = lanes[:, i].copy()
    s[4] = np.full(n, 0x01, dtype=np.uint64)
    s[16] = np.full(n, u64(0x80) << u64(56), dtype=np.uint64)

    one = u64(1)
    s63 = u64(63)
    for rc in _ROUND_CONSTANTS:
        c = [s[x] ^ s[x + 5] ^ s[x + 10] ^ s[x + 15] ^ s[x + 20] for x in range(5)]
        d = [c[(x - 1) % 5] ^ ((c[(x + 1) % 5] << one) | (c[(x + 1) % 5] >> s63)) for x in range(5)]
        for x in range(5):
            dx = d[x]
            for y in (0, 5, 10, 15, 20):
                s[x + y] ^= dx
        b = [None] * 25
        b[0] = s[0]
        for src, r, dst in _RHO_PI:
            lane = s[src]
            b[dst] = (lane << u64(r)) | (lane >> u64(64 - r))
        for y in (0, 5, 10, 15, 20):
            b0, b1, b2, b3, b4 = b[y], b[y + 1], b[y + 2], b[y + 3], b[y + 4]
            s[y] = b0 ^ (~b1 & b2)
            s[y + 1] = b1 ^ (~b2 & b3)
            s[y + 2] = b2 ^ (~b3 & b4)
            s[y + 3] = b3 ^ (~b4 & b0)
            s[y + 4] = b4 ^ (~b0 & b1)
        s[0] = s[0] ^ u64(rc)

    out = np.empty((n, 4), dtype="<u8")
    for i in range(4):
        out[:, i] = s[i]
    flat = out.tobytes()
    return [flat[i * 32 : (i + 1) * 32] for i in range(n)]
