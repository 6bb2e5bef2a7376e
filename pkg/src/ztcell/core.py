"""Shared domain types and pure PRB arithmetic used by every other module."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

# Identifier widths are fixed by the wire layout: UE ids are 64-bit, cell and
# E2 connection ids 32-bit, slice ids 16-bit. Slice id 0 means "no slice".
UeId = int
CellId = int
E2Id = int
SliceId = int

NO_SLICE: SliceId = 0

KPM_FIELDS = ("snr_db", "cqi", "tx_packets", "tx_power_dbm", "throughput_mbps")


class SliceKind(IntEnum):
    NORMAL = 0
    VERIFICATION = 1
    RESTRICTED = 2


class SlicePriority(IntEnum):
    COMMERCIAL = 0
    MISSION_CRITICAL = 1


class SplitError(ValueError):
    """Raised for an impossible equal split (n = 0 or n > total PRBs)."""


class OverAllocationError(ValueError):
    """Raised when requested budgets exceed the cell PRB count."""


@dataclass(frozen=True)
class PRBMask:
    """Fixed-length bit vector over the cell's PRBs; bit i set = PRB i owned.

    Serialized form is a big-endian bit string with PRB 0 in the most
    significant bit of the first byte, padded to whole bytes (13 bytes for a
    100-PRB cell). The slice-control message embeds exactly this layout.
    """

    size: int
    bits: int = 0

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("mask size must be >= 1")
        if self.bits < 0 or self.bits >> self.size:
            raise ValueError("mask bits outside PRB range")

    @classmethod
    def from_range(cls, start: int, count: int, size: int) -> PRBMask:
        if start < 0 or count < 0 or start + count > size:
            raise ValueError(f"PRB range [{start}, {start + count}) outside cell of {size}")
        return cls(size=size, bits=((1 << count) - 1) << start)

    @classmethod
    def from_indices(cls, indices: list[int], size: int) -> PRBMask:
        bits = 0
        for i in indices:
            if not 0 <= i < size:
                raise ValueError(f"PRB index {i} outside cell of {size}")
            bits |= 1 << i
        return cls(size=size, bits=bits)

    def popcount(self) -> int:
        return self.bits.bit_count()

    def overlaps(self, other: PRBMask) -> bool:
        return bool(self.bits & other.bits)

    def indices(self) -> list[int]:
        return [i for i in range(self.size) if self.bits >> i & 1]

    def to_bytes(self) -> bytes:
        nbytes = (self.size + 7) // 8
        acc = 0
        for prb in range(self.size):
            if self.bits >> prb & 1:
                acc |= 1 << (nbytes * 8 - 1 - prb)
        return acc.to_bytes(nbytes, "big")

    @classmethod
    def from_bytes(cls, data: bytes, size: int) -> PRBMask:
        nbytes = (size + 7) // 8
        if len(data) != nbytes:
            raise ValueError(f"expected {nbytes} mask bytes for {size} PRBs, got {len(data)}")
        acc = int.from_bytes(data, "big")
        pad_bits = nbytes * 8 - size
        if pad_bits and acc & ((1 << pad_bits) - 1):
            raise ValueError("padding bits beyond the last PRB must be zero")
        bits = 0
        for prb in range(size):
            if acc >> (nbytes * 8 - 1 - prb) & 1:
                bits |= 1 << prb
        return cls(size=size, bits=bits)


@dataclass(frozen=True)
class SliceSpec:
    id: SliceId
    mask: PRBMask
    priority: SlicePriority = SlicePriority.COMMERCIAL
    kind: SliceKind = SliceKind.NORMAL

    def __post_init__(self) -> None:
        if not 0 < self.id <= 0xFFFF:
            raise ValueError(f"slice id {self.id} outside 1..65535")
        if self.mask.popcount() == 0:
            # Applies to restricted slices too: isolation still grants >= 1 PRB.
            raise ValueError(f"slice {self.id} has an empty mask")

    def budget(self) -> int:
        return self.mask.popcount()


@dataclass(frozen=True)
class KPMReport:
    """One periodic per-UE measurement record carried over E2."""

    ue: UeId
    cell: CellId
    seq: int
    snr_db: float
    cqi: int
    tx_packets: int
    tx_power_dbm: float
    throughput_mbps: float

    def validate(self) -> None:
        if not 0 <= self.cqi <= 15:
            raise ValueError(f"cqi {self.cqi} outside 0..15")
        if self.tx_packets < 0:
            raise ValueError("tx_packets must be >= 0")
        if self.throughput_mbps < 0:
            raise ValueError("throughput_mbps must be >= 0")
        if self.seq < 0:
            raise ValueError("seq must be >= 0")


@dataclass(frozen=True)
class FieldStats:
    """Per-KPM-field profile entry: sample stats plus the accepted range.

    flag_low controls whether a window mean below `lo` counts as a deviation.
    Traffic-volume fields are checked one-sided (above `hi` only) because the
    scheduler itself drives served volume down for throttled slices.
    """

    mean: float
    std: float
    lo: float
    hi: float
    flag_low: bool = True

    def __post_init__(self) -> None:
        if self.std < 0:
            raise ValueError("std must be >= 0")
        if self.lo > self.hi:
            raise ValueError("accepted range lo > hi")


@dataclass(frozen=True)
class BehaviorProfile:
    """Per-UE mean/std and accepted range for every KPM field it is assessed on."""

    ue: UeId
    fields: dict[str, FieldStats] = field(default_factory=dict)

    def covers(self, names: tuple[str, ...]) -> bool:
        return all(n in self.fields for n in names)


@dataclass(frozen=True)
class SliceTableViolation:
    kind: str
    slices: tuple[SliceId, ...]
    detail: str


def equal_split(total_prbs: int, n: int) -> list[int]:
    """Split total_prbs into n budgets with spread <= 1.

    Remainder PRBs go to the lowest-index slices, so the output is
    deterministic and order-stable.
    """
    if n < 1 or n > total_prbs:
        raise SplitError(f"cannot split {total_prbs} PRBs into {n} slices")
    base, rem = divmod(total_prbs, n)
    return [base + 1 if i < rem else base for i in range(n)]


def budgets_to_masks(budgets: list[int], total_prbs: int) -> list[PRBMask]:
    """Lay budgets out contiguously from PRB 0; slice i starts where i-1 ends."""
    if any(b < 0 for b in budgets):
        raise ValueError("budgets must be >= 0")
    if sum(budgets) > total_prbs:
        raise OverAllocationError(
            f"budgets sum to {sum(budgets)} but the cell has {total_prbs} PRBs"
        )
    masks = []
    cursor = 0
    for b in budgets:
        masks.append(PRBMask.from_range(cursor, b, total_prbs))
        cursor += b
    return masks


def validate_slice_table(slices: list[SliceSpec], total_prbs: int) -> list[SliceTableViolation]:
    """Check a slice table for overlap and over-allocation.

    Returns an empty list when the table is valid; violations name the
    offending slice pairs. Violations are the return value, never exceptions.
    """
    violations: list[SliceTableViolation] = []
    seen_ids: set[SliceId] = set()
    for spec in slices:
        if spec.id in seen_ids:
            violations.append(
                SliceTableViolation("duplicate_id", (spec.id,), f"slice id {spec.id} repeats")
            )
        seen_ids.add(spec.id)
        if spec.mask.size != total_prbs:
            violations.append(
                SliceTableViolation(
                    "size_mismatch",
                    (spec.id,),
                    f"mask sized for {spec.mask.size} PRBs in a {total_prbs}-PRB cell",
                )
            )
    for i, a in enumerate(slices):
        for b in slices[i + 1 :]:
            if a.mask.overlaps(b.mask):
                shared = a.mask.bits & b.mask.bits
                first = (shared & -shared).bit_length() - 1
                violations.append(
                    SliceTableViolation(
                        "overlap", (a.id, b.id), f"slices {a.id} and {b.id} share PRB {first}"
                    )
                )
    total = sum(s.mask.popcount() for s in slices)
    if total > total_prbs:
        violations.append(
            SliceTableViolation(
                "over_allocation",
                tuple(s.id for s in slices),
                f"{total} PRBs allocated in a {total_prbs}-PRB cell",
            )
        )
    return violations
