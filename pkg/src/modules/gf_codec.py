"""
GF(2^8) arithmetic and Reed-Solomon stripe coding.

Symbols are bytes, addition is XOR and multiplication reduces modulo
0x11D. Payloads cross the API as ``bytes``; the byte-wise products run
through a 256x256 numpy product table.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.constants import GF_ORDER, GF_POLY, PAGE_SIZE
from src.errors import (
    DecodeError,
    DimensionMismatchError,
    DuplicateBlockError,
    ExtentMismatchError,
    ExtentOutOfRangeError,
    InvalidParamsError,
)


def _build_tables():
    exp = np.zeros(2 * GF_ORDER, dtype=np.uint8)
    log = np.zeros(GF_ORDER, dtype=np.int32)
    x = 1
    for i in range(GF_ORDER - 1):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= GF_POLY
    exp[GF_ORDER - 1:] = exp[:GF_ORDER + 1]

    # full product table: MUL[a, b] == a * b
    a = np.arange(GF_ORDER)
    la = log[a][:, None]
    lb = log[a][None, :]
    mul = exp[(la + lb) % (GF_ORDER - 1)].astype(np.uint8)
    mul[0, :] = 0
    mul[:, 0] = 0

    inv = np.zeros(GF_ORDER, dtype=np.uint8)
    for v in range(1, GF_ORDER):
        inv[v] = exp[(GF_ORDER - 1 - log[v]) % (GF_ORDER - 1)]
    return exp, log, mul, inv


GF_EXP, GF_LOG, GF_MUL_TABLE, GF_INV_TABLE = _build_tables()


# --- scalar field ops ---

def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int) -> int:
    return int(GF_MUL_TABLE[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(2^8)")
    return int(GF_INV_TABLE[a])


def gf_div(a: int, b: int) -> int:
    return gf_mul(a, gf_inv(b))


def gf_pow(a: int, n: int) -> int:
    if n == 0:
        return 1
    if a == 0:
        return 0
    return int(GF_EXP[(int(GF_LOG[a]) * n) % (GF_ORDER - 1)])


# --- byte vectors ---

def as_array(payload) -> np.ndarray:
    if isinstance(payload, np.ndarray):
        return payload.astype(np.uint8, copy=False)
    return np.frombuffer(bytes(payload), dtype=np.uint8)


def gf_mul_bytes(coef: int, payload) -> np.ndarray:
    """Scale every byte of ``payload`` by ``coef``."""
    return GF_MUL_TABLE[coef][as_array(payload)]


def xor_bytes(a, b) -> bytes:
    if len(a) != len(b):
        raise ExtentMismatchError(f"length mismatch: {len(a)} != {len(b)}")
    return np.bitwise_xor(as_array(a), as_array(b)).tobytes()


# --- configuration ---

@dataclass(frozen=True)
class ECConfig:
    k: int
    m: int
    block_size: int

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise InvalidParamsError(f"RS({self.k},{self.m}): k and m must be >= 1")
        if self.k + self.m > GF_ORDER:
            raise InvalidParamsError(f"RS({self.k},{self.m}): k+m exceeds the field size")
        if self.block_size <= 0 or self.block_size % PAGE_SIZE:
            raise InvalidParamsError(
                f"block_size {self.block_size} must be a positive multiple of {PAGE_SIZE}"
            )

    @property
    def width(self) -> int:
        return self.k + self.m

    @property
    def stripe_bytes(self) -> int:
        return self.k * self.block_size


@dataclass(frozen=True)
class CodingMatrix:
    """m x k coefficients; rows[j][i] scales data block i into parity j."""

    rows: Tuple[Tuple[int, ...], ...]

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def k(self) -> int:
        return len(self.rows[0])

    def coef(self, parity_index: int, block_index: int) -> int:
        return self.rows[parity_index][block_index]

    def column(self, block_index: int) -> Tuple[int, ...]:
        return tuple(row[block_index] for row in self.rows)

    def generator(self) -> np.ndarray:
        """(k+m) x k matrix [I_k ; rows]."""
        k = self.k
        return np.vstack([np.eye(k, dtype=np.uint8), np.array(self.rows, dtype=np.uint8)])


def cauchy_matrix(k: int, m: int) -> CodingMatrix:
    """Cauchy rows with x_i = i and y_j = k + j."""
    if k < 1 or m < 1 or k + m > GF_ORDER:
        raise InvalidParamsError(f"cannot build a Cauchy matrix for RS({k},{m})")
    rows = tuple(
        tuple(gf_inv(i ^ (k + j)) for i in range(k))
        for j in range(m)
    )
    return CodingMatrix(rows)


@dataclass
class Stripe:
    stripe_id: int
    data: List[bytes]
    parity: List[bytes]

    def is_consistent(self, mat: CodingMatrix) -> bool:
        """Parity equals the matrix applied to the data, byte by byte."""
        if len(self.data) != mat.k or len(self.parity) != mat.m:
            return False
        expected = encode_columns(mat, self.data)
        return all(e.tobytes() == bytes(p) for e, p in zip(expected, self.parity))


@dataclass(frozen=True)
class DeltaRecord:
    stripe_id: int
    block_index: int
    offset: int
    payload: bytes

    @property
    def length(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class ParityDeltaRecord:
    stripe_id: int
    parity_index: int
    offset: int
    payload: bytes

    @property
    def length(self) -> int:
        return len(self.payload)


# --- coding ---

def _mat_vec(coefs: np.ndarray, vectors: Sequence[np.ndarray]) -> List[np.ndarray]:
    out = []
    for row in coefs:
        acc = np.zeros_like(vectors[0])
        for c, vec in zip(row, vectors):
            if c:
                acc ^= GF_MUL_TABLE[int(c)][vec]
        out.append(acc)
    return out


def encode_columns(mat: CodingMatrix, data: Sequence) -> List[np.ndarray]:
    """Parity for equally sized data segments of any length."""
    vectors = [as_array(d) for d in data]
    return _mat_vec(np.array(mat.rows, dtype=np.uint8), vectors)


def encode_stripe(cfg: ECConfig, mat: CodingMatrix, data: Sequence) -> List[bytes]:
    if len(data) != cfg.k or mat.k != cfg.k or mat.m != cfg.m:
        raise DimensionMismatchError(
            f"expected {cfg.k} data blocks for RS({cfg.k},{cfg.m}), got {len(data)}"
        )
    for i, block in enumerate(data):
        if len(block) != cfg.block_size:
            raise DimensionMismatchError(
                f"data block {i} has {len(block)} bytes, expected {cfg.block_size}"
            )
    return [p.tobytes() for p in encode_columns(mat, data)]


def compute_data_delta(old, new) -> bytes:
    return xor_bytes(old, new)


def merge_deltas_same_extent(d1: DeltaRecord, d2: DeltaRecord) -> DeltaRecord:
    if (d1.stripe_id, d1.block_index, d1.offset, d1.length) != (
        d2.stripe_id, d2.block_index, d2.offset, d2.length
    ):
        raise ExtentMismatchError("deltas cover different extents")
    return DeltaRecord(d1.stripe_id, d1.block_index, d1.offset, xor_bytes(d1.payload, d2.payload))


def combine_cross_block_deltas(
    mat: CodingMatrix,
    deltas: Sequence[Tuple[int, bytes]],
    stripe_id: int = 0,
    offset: int = 0,
) -> List[ParityDeltaRecord]:
    """Fold same-offset deltas of several data blocks into one delta per parity."""
    if not deltas:
        return []
    seen = set()
    length = len(deltas[0][1])
    for block_index, payload in deltas:
        if block_index in seen:
            raise DuplicateBlockError(f"block {block_index} appears twice")
        seen.add(block_index)
        if len(payload) != length:
            raise ExtentMismatchError("deltas have different lengths")

    out = []
    for j in range(mat.m):
        acc = np.zeros(length, dtype=np.uint8)
        for block_index, payload in deltas:
            c = mat.coef(j, block_index)
            if c:
                acc ^= GF_MUL_TABLE[c][as_array(payload)]
        out.append(ParityDeltaRecord(stripe_id, j, offset, acc.tobytes()))
    return out


def apply_parity_delta(parity_block, pd: ParityDeltaRecord) -> bytes:
    end = pd.offset + pd.length
    if pd.offset < 0 or end > len(parity_block):
        raise ExtentOutOfRangeError(
            f"extent [{pd.offset}, {end}) outside block of {len(parity_block)} bytes"
        )
    block = np.array(as_array(parity_block), copy=True)
    block[pd.offset:end] ^= as_array(pd.payload)
    return block.tobytes()


# --- decoding ---

def gf_mat_inv(matrix: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse over GF(2^8)."""
    n = matrix.shape[0]
    work = np.concatenate([matrix.astype(np.uint8), np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if work[r, col]), None)
        if pivot is None:
            raise DecodeError("singular decoding submatrix")
        if pivot != col:
            work[[col, pivot]] = work[[pivot, col]]
        work[col] = GF_MUL_TABLE[gf_inv(int(work[col, col]))][work[col]]
        for r in range(n):
            factor = int(work[r, col])
            if r != col and factor:
                work[r] ^= GF_MUL_TABLE[factor][work[col]]
    return work[:, n:]


def decode_recover(
    cfg: ECConfig,
    mat: CodingMatrix,
    surviving: Mapping[int, bytes],
    missing: Optional[Iterable[int]] = None,
) -> Dict[int, bytes]:
    """
    Rebuild lost blocks from exactly k survivors.

    Positions 0..k-1 are data blocks, k..k+m-1 parity blocks. ``missing``
    defaults to every position not among the survivors.
    """
    width = cfg.width
    if missing is None:
        missing = [p for p in range(width) if p not in surviving]
    missing = sorted(set(missing))
    if len(missing) > cfg.m:
        raise DecodeError(f"{len(missing)} blocks missing, RS({cfg.k},{cfg.m}) tolerates {cfg.m}")
    if not missing:
        return {}
    if len(surviving) != cfg.k:
        raise DecodeError(f"need exactly {cfg.k} survivors, got {len(surviving)}")
    for pos in list(surviving) + missing:
        if not 0 <= pos < width:
            raise DecodeError(f"position {pos} outside stripe of width {width}")
    if set(missing) & set(surviving):
        raise DecodeError("a position is both missing and surviving")

    positions = sorted(surviving)
    vectors = [as_array(surviving[p]) for p in positions]
    if len({len(v) for v in vectors}) != 1:
        raise DimensionMismatchError("survivors have different lengths")

    if positions == list(range(cfg.k)):
        data = vectors
    else:
        sub = mat.generator()[positions]
        data = _mat_vec(gf_mat_inv(sub), vectors)

    out = {}
    parity_rows = [p - cfg.k for p in missing if p >= cfg.k]
    parity = dict(zip(parity_rows, _mat_vec(np.array(mat.rows, dtype=np.uint8)[parity_rows], data))) \
        if parity_rows else {}
    for p in missing:
        out[p] = (data[p] if p < cfg.k else parity[p - cfg.k]).tobytes()
    return out
