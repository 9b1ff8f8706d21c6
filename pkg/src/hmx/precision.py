"""Mixed-precision storage schemes for H-matrix blocks.

Three families are implemented on top of the FP64 masters:

* method 1 casts the stored structures directly (double, single, or
  mixed source precision),
* method 2 first normalizes every low-rank factor column/row to unit
  max-abs, collecting the magnitudes in an FP64 diagonal that is never
  cast down,
* method 3 keeps dense blocks in FP64 and classifies each low-rank
  column/row pair by how far its diagonal magnitude falls below the
  block maximum: more than 10**c below means FP32 storage.

Preparation happens once, outside any timed loop; the resulting
payloads are immutable and shared by the matvec kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compress import DenseBlockF64, HMatrixF64, LowRankBlockF64

__all__ = [
    "PrecisionScheme",
    "parse_scheme",
    "ScaledLowRank",
    "SplitLowRank",
    "DensePayload",
    "FactorPayload",
    "ScaledPayload",
    "SchemeHMatrix",
    "scale_decompose",
    "split_indices",
    "prepare_scheme",
    "payload_bytes",
    "storage_table",
    "SCHEME_NAMES",
]

_VARIANTS = ("double", "single", "mixed")

#: fixed-name schemes; method 3 adds the parametric "m3:c=<int>" family
SCHEME_NAMES = (
    "m1-double", "m1-single", "m1-mixed",
    "m2-double", "m2-single", "m2-mixed",
)


@dataclass(frozen=True)
class PrecisionScheme:
    """Identifies one storage/computation scheme.

    `variant` is set for methods 1 and 2; `c` only for method 3.
    """

    method: int
    variant: str | None = None
    c: int | None = None

    def __post_init__(self):
        if self.method in (1, 2):
            if self.variant not in _VARIANTS or self.c is not None:
                raise ValueError(f"method {self.method} needs a variant and no c")
        elif self.method == 3:
            if self.variant is not None or not isinstance(self.c, int):
                raise ValueError("method 3 needs an integer c and no variant")
        else:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def label(self) -> str:
        if self.method == 3:
            return f"m3:c={self.c}"
        return f"m{self.method}-{self.variant}"

    @property
    def reads_fp32_source(self) -> bool:
        """True when the scheme gathers x from the FP32 shadow copy."""
        return self.variant == "single"

    @property
    def casts_dense_fp32(self) -> bool:
        # method 3 keeps every dense block in FP64
        return self.method in (1, 2) and self.variant != "double"


def parse_scheme(name: str) -> PrecisionScheme:
    """Parse a CLI scheme name such as 'm2-mixed' or 'm3:c=-1'."""
    s = name.strip().lower()
    if s in SCHEME_NAMES:
        method = int(s[1])
        return PrecisionScheme(method, s.split("-", 1)[1])
    if s.startswith("m3:c="):
        try:
            return PrecisionScheme(3, c=int(s[5:]))
        except ValueError:
            raise ValueError(f"bad split parameter in scheme name {name!r}") from None
    raise ValueError(
        f"unknown scheme {name!r}; expected one of {', '.join(SCHEME_NAMES)} "
        f"or m3:c=<int>"
    )


@dataclass
class ScaledLowRank:
    """Normalized factors plus the FP64 magnitude diagonal.

    Every nonzero column of `u_unit` and row of `vt_unit` has max-abs
    exactly 1.0; `diag[i]` carries the product of the two extracted
    magnitudes. Zero columns/rows stay zero with a zero diagonal entry.
    """

    u_unit: np.ndarray
    vt_unit: np.ndarray
    diag: np.ndarray


def scale_decompose(u: np.ndarray, vt: np.ndarray) -> ScaledLowRank:
    """Factor out per-column/per-row max-abs magnitudes of `u @ vt`.

    The reconstruction u_unit @ diag(diag) @ vt_unit equals u @ vt in
    exact arithmetic; in FP64 it agrees to a few ulps.
    """
    u = np.asarray(u, dtype=np.float64)
    vt = np.asarray(vt, dtype=np.float64)
    if u.ndim != 2 or vt.ndim != 2 or u.shape[1] != vt.shape[0]:
        raise ValueError(f"inconsistent factor shapes {u.shape} x {vt.shape}")

    col_mag = np.max(np.abs(u), axis=0) if u.shape[0] else np.zeros(u.shape[1])
    row_mag = np.max(np.abs(vt), axis=1) if vt.shape[1] else np.zeros(vt.shape[0])
    # a zero column/row divides by 1 instead: stays zero, no 0/0 warning
    u_unit = u / np.where(col_mag == 0.0, 1.0, col_mag)
    vt_unit = vt / np.where(row_mag == 0.0, 1.0, row_mag)[:, None]
    return ScaledLowRank(
        u_unit=np.ascontiguousarray(u_unit),
        vt_unit=np.ascontiguousarray(vt_unit),
        diag=col_mag * row_mag,
    )


def split_indices(diag, c: int):
    """Classify diagonal entries (0-based) per the strict threshold rule.

    Returns `(idx_fp64, idx_fp32)`, both ascending. Index i lands in the
    FP32 class iff diag[i] < max(diag) * 10**(-c); with c = -1 the
    threshold exceeds the maximum itself so everything is FP32, and an
    all-zero diagonal keeps everything FP64 (the product is zero anyway).
    """
    d = np.asarray(diag, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError("diagonal must be one-dimensional")
    if d.size and np.any(d < 0.0):
        raise ValueError("diagonal entries must be non-negative")
    if d.size == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty
    threshold = float(np.max(d)) * 10.0 ** (-c)
    fp32_mask = d < threshold
    return np.flatnonzero(~fp32_mask), np.flatnonzero(fp32_mask)


# ---------------------------------------------------------------------------
# per-block payloads read by the matvec kernels


@dataclass(slots=True)
class DensePayload:
    values: np.ndarray  # FP64 master reference or FP32 copy


@dataclass(slots=True)
class FactorPayload:
    """Method 1 low-rank payload: plain factors, no diagonal."""

    u: np.ndarray
    vt: np.ndarray


@dataclass(slots=True)
class ScaledPayload:
    """Method 2 low-rank payload: unit factors plus the FP64 diagonal."""

    u: np.ndarray
    vt: np.ndarray
    diag: np.ndarray


@dataclass(slots=True)
class SplitLowRank:
    """Method 3 payload: contiguous FP64 and FP32 column classes.

    Classes preserve the original column order within themselves
    (stable reorder); `diag_*` entries stay FP64 in both classes.
    """

    idx_fp64: np.ndarray
    idx_fp32: np.ndarray
    u_hi: np.ndarray
    vt_hi: np.ndarray
    diag_hi: np.ndarray
    u_lo: np.ndarray
    vt_lo: np.ndarray
    diag_lo: np.ndarray


@dataclass
class SchemeHMatrix:
    """An H-matrix prepared for one precision scheme.

    Holds a reference to the FP64 master plus per-block payloads in the
    dtypes the scheme mandates. `underflow_count` counts master values
    that lost all magnitude (subnormal or zero) in an FP32 cast.
    """

    base: HMatrixF64
    scheme: PrecisionScheme
    payloads: list
    payload_bytes: int
    underflow_count: int = 0
    _blocks: list = field(default=None, repr=False)

    def __post_init__(self):
        if self._blocks is None:
            self._blocks = self.base.partition.blocks

    @property
    def n(self) -> int:
        return self.base.n

    def items(self):
        return zip(self._blocks, self.payloads)


_F32_TINY = float(np.finfo(np.float32).tiny)
_F32_MAX = float(np.finfo(np.float32).max)


def _cast_fp32(arr: np.ndarray, where: str):
    """Round-to-nearest FP32 copy; overflow is a hard error, underflow counted."""
    with np.errstate(over="ignore"):
        # overflow is detected and raised below, numpy need not warn
        out = arr.astype(np.float32)
    if np.any(np.isinf(out) & np.isfinite(arr)):
        peak = float(np.max(np.abs(arr)))
        raise OverflowError(
            f"FP32 overflow while casting {where}: |value| up to {peak:.6g} "
            f"exceeds {_F32_MAX:.6g}"
        )
    lost = int(np.count_nonzero((arr != 0.0) & (np.abs(out) < _F32_TINY)))
    return out, lost


def prepare_scheme(h: HMatrixF64, scheme) -> SchemeHMatrix:
    """Build the per-block payloads a scheme needs, casting once up front.

    `scheme` may be a PrecisionScheme or a CLI name string.
    """
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)

    payloads = []
    underflow = 0
    total_bytes = 0

    for k, (blk, master) in enumerate(h.items()):
        where = (f"block {k} rows [{blk.row_start},{blk.row_end}) "
                 f"cols [{blk.col_start},{blk.col_end})")
        if isinstance(master, DenseBlockF64):
            if scheme.casts_dense_fp32:
                vals, lost = _cast_fp32(master.values, where)
                underflow += lost
            else:
                vals = master.values
            payloads.append(DensePayload(vals))
            total_bytes += vals.nbytes
            continue

        assert isinstance(master, LowRankBlockF64)
        if scheme.method == 1:
            if scheme.variant == "double":
                pay = FactorPayload(master.u, master.vt)
            else:
                u32, l1 = _cast_fp32(master.u, where)
                vt32, l2 = _cast_fp32(master.vt, where)
                underflow += l1 + l2
                pay = FactorPayload(u32, vt32)
            total_bytes += pay.u.nbytes + pay.vt.nbytes
        elif scheme.method == 2:
            scaled = scale_decompose(master.u, master.vt)
            if scheme.variant == "double":
                pay = ScaledPayload(scaled.u_unit, scaled.vt_unit, scaled.diag)
            else:
                u32, l1 = _cast_fp32(scaled.u_unit, where)
                vt32, l2 = _cast_fp32(scaled.vt_unit, where)
                underflow += l1 + l2
                pay = ScaledPayload(u32, vt32, scaled.diag)
            total_bytes += pay.u.nbytes + pay.vt.nbytes + pay.diag.nbytes
        else:
            scaled = scale_decompose(master.u, master.vt)
            idx_hi, idx_lo = split_indices(scaled.diag, scheme.c)
            u_lo, l1 = _cast_fp32(
                np.ascontiguousarray(scaled.u_unit[:, idx_lo]), where)
            vt_lo, l2 = _cast_fp32(
                np.ascontiguousarray(scaled.vt_unit[idx_lo, :]), where)
            underflow += l1 + l2
            pay = SplitLowRank(
                idx_fp64=idx_hi,
                idx_fp32=idx_lo,
                u_hi=np.ascontiguousarray(scaled.u_unit[:, idx_hi]),
                vt_hi=np.ascontiguousarray(scaled.vt_unit[idx_hi, :]),
                diag_hi=np.ascontiguousarray(scaled.diag[idx_hi]),
                u_lo=u_lo,
                vt_lo=vt_lo,
                diag_lo=np.ascontiguousarray(scaled.diag[idx_lo]),
            )
            total_bytes += (pay.u_hi.nbytes + pay.vt_hi.nbytes + pay.diag_hi.nbytes
                            + pay.u_lo.nbytes + pay.vt_lo.nbytes + pay.diag_lo.nbytes)
        payloads.append(pay)

    return SchemeHMatrix(
        base=h,
        scheme=scheme,
        payloads=payloads,
        payload_bytes=int(total_bytes),
        underflow_count=underflow,
    )


def payload_bytes(sh: SchemeHMatrix) -> int:
    """Matrix bytes traversed by one matvec under this scheme."""
    return sh.payload_bytes


def _dense_columns(variant: str) -> dict:
    return {
        "target": "fp64",  # dense partials always accumulate into FP64
        "matrix": "fp64" if variant == "double" else "fp32",
        "source": "fp32" if variant == "single" else "fp64",
    }


def _lowrank_columns(method: int, variant: str) -> dict:
    low = variant != "double"
    return {
        "intermediate": "fp32" if (method == 1 and low) else "fp64",
        "right_factor": "fp32" if low else "fp64",
        "source": "fp32" if variant == "single" else "fp64",
        "scale": "fp64" if method == 2 else None,
        "target": "fp64",
        "left_factor": "fp32" if low else "fp64",
    }


def storage_table(scheme) -> dict:
    """Storage precision of every symbol the scheme touches.

    Keys mirror the per-block pipeline: the dense path (matrix, source
    slice, accumulation target), the low-rank path (right factor,
    source slice, intermediate, optional scale diagonal, left factor,
    target), and the FP64 result vector. Method 3 reports its two
    column classes separately.
    """
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    if scheme.method == 3:
        return {
            "dense": _dense_columns("double"),
            "lowrank": {
                "fp64_class": _lowrank_columns(2, "double"),
                "fp32_class": _lowrank_columns(2, "mixed"),
            },
            "result": "fp64",
        }
    return {
        "dense": _dense_columns(scheme.variant),
        "lowrank": _lowrank_columns(scheme.method, scheme.variant),
        "result": "fp64",
    }
