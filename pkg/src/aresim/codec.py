"""Systematic [n, k] erasure code over GF(2^8).

A value is framed as a 4-byte big-endian length header plus the raw bytes,
zero-padded to k equal shards of ceil((|v| + 4) / k) bytes. Element i is the
i-th row of a systematic Vandermonde-derived generator matrix applied to the
shards, so elements 1..k are the shards themselves and any k distinct elements
reconstruct the value. n is limited by the field size (n <= 255); this artifact
only ever uses n <= 8.

Elements carry the original value length so any holder can account payload
bytes exactly as |v|/k without decoding.
"""

from __future__ import annotations

from dataclasses import dataclass

_HEADER = 4


class CodecError(ValueError):
    pass


class InsufficientElements(CodecError):
    pass


@dataclass(frozen=True)
class CodedElement:
    index: int  # 1-based row of the generator matrix
    payload: bytes
    orig_len: int


# --- GF(2^8) arithmetic, generated by x^8 + x^4 + x^3 + x^2 + 1 ---------------

_EXP = [0] * 510
_LOG = [0] * 256
_x = 1
for _i in range(255):
    _EXP[_i] = _x
    _LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= 0x11D
for _i in range(255, 510):
    _EXP[_i] = _EXP[_i - 255]


def _gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def _gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("gf inverse of zero")
    return _EXP[255 - _LOG[a]]


def _mat_inv(m: list[list[int]]) -> list[list[int]]:
    """Gauss-Jordan inverse over GF(2^8)."""
    k = len(m)
    aug = [row[:] + [1 if i == j else 0 for j in range(k)] for i, row in enumerate(m)]
    for col in range(k):
        pivot = next((r for r in range(col, k) if aug[r][col]), None)
        if pivot is None:
            raise CodecError("singular matrix")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = _gf_inv(aug[col][col])
        aug[col] = [_gf_mul(inv, x) for x in aug[col]]
        for r in range(k):
            if r != col and aug[r][col]:
                coef = aug[r][col]
                aug[r] = [x ^ _gf_mul(coef, y) for x, y in zip(aug[r], aug[col])]
    return [row[k:] for row in aug]


def _generator(n: int, k: int) -> list[list[int]]:
    """Systematic generator: Vandermonde rows normalized so the top k are identity."""
    vand = [[_pow(i + 1, j) for j in range(k)] for i in range(n)]
    top_inv = _mat_inv([row[:] for row in vand[:k]])
    return [[_dot(vand[i], [top_inv[r][j] for r in range(k)]) for j in range(k)]
            for i in range(n)]


def _pow(base: int, exp: int) -> int:
    acc = 1
    for _ in range(exp):
        acc = _gf_mul(acc, base)
    return acc


def _dot(row: list[int], col: list[int]) -> int:
    acc = 0
    for a, b in zip(row, col):
        acc ^= _gf_mul(a, b)
    return acc


_GEN_CACHE: dict[tuple[int, int], list[list[int]]] = {}


def _gen(n: int, k: int) -> list[list[int]]:
    if not 1 <= k <= n <= 255:
        raise CodecError(f"need 1 <= k <= n <= 255, got n={n} k={k}")
    key = (n, k)
    if key not in _GEN_CACHE:
        _GEN_CACHE[key] = _generator(n, k)
    return _GEN_CACHE[key]


def element_len(k: int, vlen: int) -> int:
    """Payload bytes per element for a value of vlen bytes."""
    return -(-(vlen + _HEADER) // k)


def encode(n: int, k: int, value: bytes) -> list[CodedElement]:
    gen = _gen(n, k)
    L = element_len(k, len(value))
    raw = len(value).to_bytes(_HEADER, "big") + value
    raw = raw + bytes(k * L - len(raw))
    shards = [raw[j * L:(j + 1) * L] for j in range(k)]
    out = []
    for i in range(n):
        row = gen[i]
        if i < k:
            payload = shards[i]  # systematic rows are identity
        else:
            acc = bytearray(L)
            for j, coef in enumerate(row):
                if coef:
                    shard = shards[j]
                    for b in range(L):
                        acc[b] ^= _gf_mul(coef, shard[b])
            payload = bytes(acc)
        out.append(CodedElement(i + 1, payload, len(value)))
    return out


def decode(n: int, k: int, elements) -> bytes:
    gen = _gen(n, k)
    by_index: dict[int, CodedElement] = {}
    for e in elements:
        if not 1 <= e.index <= n:
            raise CodecError(f"element index {e.index} out of range for n={n}")
        by_index.setdefault(e.index, e)
    if len(by_index) < k:
        raise InsufficientElements(f"have {len(by_index)} distinct elements, need {k}")
    chosen = [by_index[i] for i in sorted(by_index)][:k]
    vlen = chosen[0].orig_len
    L = element_len(k, vlen)
    for e in chosen:
        if e.orig_len != vlen:
            raise CodecError("elements disagree on original value length")
        if len(e.payload) != L:
            raise CodecError(f"payload length {len(e.payload)}, expected {L}")
    sub_inv = _mat_inv([gen[e.index - 1][:] for e in chosen])
    raw = bytearray(k * L)
    for j in range(k):
        row = sub_inv[j]
        acc = bytearray(L)
        for coef, e in zip(row, chosen):
            if coef:
                for b in range(L):
                    acc[b] ^= _gf_mul(coef, e.payload[b])
        raw[j * L:(j + 1) * L] = acc
    header = int.from_bytes(raw[:_HEADER], "big")
    if header != vlen:
        raise CodecError(f"decoded length header {header} != declared {vlen}")
    return bytes(raw[_HEADER:_HEADER + vlen])
