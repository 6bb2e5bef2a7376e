"""Typed message set and bit-exact framing for all RAN-RIC traffic.

Frame layout (all integers big-endian):

    u32  total frame length, including these four bytes
    u8   kind tag (MsgKind value)
    u32  cell id
    u32  e2 connection id
    u64  per-connection sequence number
    ...  kind-specific body, fields in declaration order

Bodies:

    AUTH_REQUEST          blob: 66 raw bytes (see xapps.auth for the layout)
    AUTH_RESPONSE         ue u64, outcome u8, reason u8, token 16 bytes
    KPM_INDICATION        ue u64, cell u32, seq u64, snr f64, cqi u8,
                          tx_packets u32, tx_power f64, throughput f64
    SLICE_CONTROL         bindings: u16 count, count * (ue u64, slice u16);
                          slices: u16 count, count * (id u16, mask, prio u8,
                          kind u8) where mask = u16 PRB count + padded bits
    SUBSCRIPTION_REQUEST  period_ms u32, filter u8 (0 = all,
                          1 = explicit: u16 count + count * u64)
    SUBSCRIPTION_ACK      period_ms u32, accepted u8

Identical messages always encode to identical bytes; decode is the exact
inverse on the image of encode and rejects anything else with the byte
offset of the failure. Golden frames live in tests/data/golden_frames.txt.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum

from .core import (
    CellId,
    E2Id,
    KPMReport,
    PRBMask,
    SliceId,
    SliceKind,
    SlicePriority,
    SliceSpec,
    UeId,
    validate_slice_table,
)

HEADER_LEN = 21
AUTH_BLOB_LEN = 66
TOKEN_LEN = 16


class MsgKind(IntEnum):
    AUTH_REQUEST = 0
    AUTH_RESPONSE = 1
    KPM_INDICATION = 2
    SLICE_CONTROL = 3
    SUBSCRIPTION_REQUEST = 4
    SUBSCRIPTION_ACK = 5


class AuthOutcome(IntEnum):
    GRANTED = 0
    DENIED = 1
    REVOKED = 2


class AuthReason(IntEnum):
    OK = 0
    BAD_TAG = 1
    UNKNOWN_TOKEN = 2
    RAN_UNVERIFIED = 3
    EXPIRED = 4
    SLICE_MISMATCH = 5


class EncodeError(ValueError):
    """A payload invariant violation surfaced at encode time."""


class DecodeError(ValueError):
    def __init__(self, offset: int, detail: str) -> None:
        super().__init__(f"decode error at byte {offset}: {detail}")
        self.offset = offset
        self.detail = detail


@dataclass(frozen=True)
class AuthRequestBody:
    blob: bytes


@dataclass(frozen=True)
class AuthResponseBody:
    ue: UeId
    outcome: AuthOutcome
    reason: AuthReason
    token: bytes = b"\x00" * TOKEN_LEN  # fresh transaction token on grant


@dataclass(frozen=True)
class KpmIndicationBody:
    report: KPMReport


@dataclass(frozen=True)
class SliceControlBody:
    bindings: tuple[tuple[UeId, SliceId], ...]
    slices: tuple[SliceSpec, ...]


@dataclass(frozen=True)
class SubscriptionRequestBody:
    report_period_ms: int
    ue_filter: tuple[UeId, ...] | None = None  # None = all UEs


@dataclass(frozen=True)
class SubscriptionAckBody:
    report_period_ms: int
    accepted: bool = True


Body = (
    AuthRequestBody
    | AuthResponseBody
    | KpmIndicationBody
    | SliceControlBody
    | SubscriptionRequestBody
    | SubscriptionAckBody
)

_BODY_TYPES = {
    MsgKind.AUTH_REQUEST: AuthRequestBody,
    MsgKind.AUTH_RESPONSE: AuthResponseBody,
    MsgKind.KPM_INDICATION: KpmIndicationBody,
    MsgKind.SLICE_CONTROL: SliceControlBody,
    MsgKind.SUBSCRIPTION_REQUEST: SubscriptionRequestBody,
    MsgKind.SUBSCRIPTION_ACK: SubscriptionAckBody,
}

FRAME_MS = 10  # subscription periods must be whole radio frames


@dataclass(frozen=True)
class E2Message:
    kind: MsgKind
    cell: CellId
    e2: E2Id
    seq: int
    body: Body


def _check_uint(value: int, bits: int, name: str) -> None:
    if not 0 <= value < 1 << bits:
        raise EncodeError(f"{name} {value} outside u{bits}")


def _check_finite(value: float, name: str) -> None:
    if not math.isfinite(value):
        raise EncodeError(f"{name} must be finite, got {value}")


def _validate(msg: E2Message) -> None:
    expected = _BODY_TYPES[msg.kind]
    if not isinstance(msg.body, expected):
        raise EncodeError(f"{msg.kind.name} carries {type(msg.body).__name__}")
    _check_uint(msg.cell, 32, "cell id")
    _check_uint(msg.e2, 32, "e2 id")
    _check_uint(msg.seq, 64, "seq")
    body = msg.body
    if isinstance(body, AuthRequestBody):
        if len(body.blob) != AUTH_BLOB_LEN:
            raise EncodeError(f"auth blob must be {AUTH_BLOB_LEN} bytes, got {len(body.blob)}")
    elif isinstance(body, AuthResponseBody):
        _check_uint(body.ue, 64, "ue id")
        if body.outcome not in tuple(AuthOutcome) or body.reason not in tuple(AuthReason):
            raise EncodeError("invalid auth outcome/reason")
        if len(body.token) != TOKEN_LEN:
            raise EncodeError(f"token must be {TOKEN_LEN} bytes")
    elif isinstance(body, KpmIndicationBody):
        r = body.report
        try:
            r.validate()
        except ValueError as e:
            raise EncodeError(str(e)) from e
        _check_uint(r.ue, 64, "ue id")
        _check_uint(r.cell, 32, "cell id")
        _check_uint(r.seq, 64, "report seq")
        _check_uint(r.tx_packets, 32, "tx_packets")
        for name in ("snr_db", "tx_power_dbm", "throughput_mbps"):
            _check_finite(getattr(r, name), name)
    elif isinstance(body, SliceControlBody):
        if len(body.slices) > 0xFFFF or len(body.bindings) > 0xFFFF:
            raise EncodeError("slice control lists exceed u16 count")
        sizes = {s.mask.size for s in body.slices}
        if len(sizes) > 1:
            raise EncodeError("slice masks disagree on cell PRB count")
        total = sizes.pop() if sizes else 0
        violations = validate_slice_table(list(body.slices), total) if body.slices else []
        if violations:
            raise EncodeError("; ".join(v.detail for v in violations))
        declared = {s.id for s in body.slices}
        for ue, sl in body.bindings:
            _check_uint(ue, 64, "ue id")
            _check_uint(sl, 16, "slice id")
            if sl not in declared:
                raise EncodeError(f"binding references undeclared slice {sl}")
    elif isinstance(body, SubscriptionRequestBody):
        _check_uint(body.report_period_ms, 32, "report period")
        if body.report_period_ms == 0 or body.report_period_ms % FRAME_MS:
            raise EncodeError(
                f"report period {body.report_period_ms} ms is not a whole number of "
                f"{FRAME_MS} ms frames"
            )
        if body.ue_filter is not None:
            if len(body.ue_filter) > 0xFFFF:
                raise EncodeError("ue filter exceeds u16 count")
            for ue in body.ue_filter:
                _check_uint(ue, 64, "ue id")
    elif isinstance(body, SubscriptionAckBody):
        _check_uint(body.report_period_ms, 32, "report period")


def _encode_body(body: Body) -> bytes:
    if isinstance(body, AuthRequestBody):
        return body.blob
    if isinstance(body, AuthResponseBody):
        return struct.pack(">QBB", body.ue, body.outcome, body.reason) + body.token
    if isinstance(body, KpmIndicationBody):
        r = body.report
        return struct.pack(
            ">QIQdBIdd",
            r.ue,
            r.cell,
            r.seq,
            r.snr_db,
            r.cqi,
            r.tx_packets,
            r.tx_power_dbm,
            r.throughput_mbps,
        )
    if isinstance(body, SliceControlBody):
        out = [struct.pack(">H", len(body.bindings))]
        for ue, sl in body.bindings:
            out.append(struct.pack(">QH", ue, sl))
        out.append(struct.pack(">H", len(body.slices)))
        for s in body.slices:
            out.append(struct.pack(">HH", s.id, s.mask.size))
            out.append(s.mask.to_bytes())
            out.append(struct.pack(">BB", s.priority, s.kind))
        return b"".join(out)
    if isinstance(body, SubscriptionRequestBody):
        if body.ue_filter is None:
            return struct.pack(">IB", body.report_period_ms, 0)
        out = [struct.pack(">IBH", body.report_period_ms, 1, len(body.ue_filter))]
        out.extend(struct.pack(">Q", ue) for ue in body.ue_filter)
        return b"".join(out)
    if isinstance(body, SubscriptionAckBody):
        return struct.pack(">IB", body.report_period_ms, 1 if body.accepted else 0)
    raise EncodeError(f"unknown body type {type(body).__name__}")


def encode(msg: E2Message) -> bytes:
    _validate(msg)
    payload = _encode_body(msg.body)
    total = HEADER_LEN + len(payload)
    return struct.pack(">IBIIQ", total, msg.kind, msg.cell, msg.e2, msg.seq) + payload


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise DecodeError(self.offset, f"truncated while reading {what}")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _decode_body(kind: MsgKind, rd: _Reader) -> Body:
    if kind == MsgKind.AUTH_REQUEST:
        return AuthRequestBody(blob=rd.take(AUTH_BLOB_LEN, "auth blob"))
    if kind == MsgKind.AUTH_RESPONSE:
        ue, outcome, reason = rd.unpack(">QBB", "auth response")
        token = rd.take(TOKEN_LEN, "token")
        if outcome not in tuple(AuthOutcome):
            raise DecodeError(rd.offset - TOKEN_LEN - 2, f"unknown outcome {outcome}")
        if reason not in tuple(AuthReason):
            raise DecodeError(rd.offset - TOKEN_LEN - 1, f"unknown reason {reason}")
        return AuthResponseBody(ue, AuthOutcome(outcome), AuthReason(reason), token)
    if kind == MsgKind.KPM_INDICATION:
        ue, cell, seq, snr, cqi, pkts, power, tput = rd.unpack(">QIQdBIdd", "kpm report")
        report = KPMReport(ue, cell, seq, snr, cqi, pkts, power, tput)
        try:
            report.validate()
        except ValueError as e:
            raise DecodeError(rd.offset, str(e)) from e
        for name in ("snr_db", "tx_power_dbm", "throughput_mbps"):
            if not math.isfinite(getattr(report, name)):
                raise DecodeError(rd.offset, f"non-finite {name}")
        return KpmIndicationBody(report)
    if kind == MsgKind.SLICE_CONTROL:
        (n_bind,) = rd.unpack(">H", "binding count")
        bindings = tuple(rd.unpack(">QH", "binding") for _ in range(n_bind))
        (n_slices,) = rd.unpack(">H", "slice count")
        slices = []
        for _ in range(n_slices):
            sid, size = rd.unpack(">HH", "slice header")
            at = rd.offset
            if size == 0:
                raise DecodeError(at, "slice mask sized for 0 PRBs")
            raw = rd.take((size + 7) // 8, "slice mask")
            try:
                mask = PRBMask.from_bytes(raw, size)
            except ValueError as e:
                raise DecodeError(at, str(e)) from e
            prio, skind = rd.unpack(">BB", "slice attrs")
            if prio not in tuple(SlicePriority):
                raise DecodeError(rd.offset - 2, f"unknown priority {prio}")
            if skind not in tuple(SliceKind):
                raise DecodeError(rd.offset - 1, f"unknown slice kind {skind}")
            try:
                slices.append(SliceSpec(sid, mask, SlicePriority(prio), SliceKind(skind)))
            except ValueError as e:
                raise DecodeError(at, str(e)) from e
        return SliceControlBody(bindings=bindings, slices=tuple(slices))
    if kind == MsgKind.SUBSCRIPTION_REQUEST:
        period, flag = rd.unpack(">IB", "subscription")
        if flag == 0:
            return SubscriptionRequestBody(period, None)
        if flag != 1:
            raise DecodeError(rd.offset - 1, f"unknown filter flag {flag}")
        (count,) = rd.unpack(">H", "filter count")
        ues = tuple(rd.unpack(">Q", "filtered ue")[0] for _ in range(count))
        return SubscriptionRequestBody(period, ues)
    if kind == MsgKind.SUBSCRIPTION_ACK:
        period, accepted = rd.unpack(">IB", "subscription ack")
        if accepted > 1:
            raise DecodeError(rd.offset - 1, f"accepted flag {accepted} not boolean")
        return SubscriptionAckBody(period, bool(accepted))
    raise DecodeError(4, f"unknown kind tag {kind}")


def decode(data: bytes) -> E2Message:
    """Parse one exact frame; inverse of encode on its image.

    Rejects truncation, unknown kind tags, and length mismatches, naming the
    byte offset. Per-connection seq monotonicity is the router's concern, not
    checked here.
    """
    rd = _Reader(data)
    (total,) = rd.unpack(">I", "length prefix")
    if total != len(data):
        raise DecodeError(0, f"length prefix {total} but frame has {len(data)} bytes")
    (tag,) = rd.unpack(">B", "kind tag")
    if tag not in tuple(MsgKind):
        raise DecodeError(4, f"unknown kind tag {tag}")
    kind = MsgKind(tag)
    cell, e2, seq = rd.unpack(">IIQ", "header")
    body = _decode_body(kind, rd)
    if rd.offset != len(data):
        raise DecodeError(rd.offset, f"{len(data) - rd.offset} trailing bytes")
    msg = E2Message(kind=kind, cell=cell, e2=e2, seq=seq, body=body)
    try:
        _validate(msg)
    except EncodeError as e:
        raise DecodeError(HEADER_LEN, str(e)) from e
    return msg


class Connection:
    """One RAN-RIC link; stamps a strictly increasing seq on each side's sends."""

    def __init__(self, cell: CellId, e2: E2Id) -> None:
        self.cell = cell
        self.e2 = e2
        self._tx = {"ran": 0, "ric": 0}

    def next_seq(self, side: str) -> int:
        self._tx[side] += 1
        return self._tx[side]

    def make(self, side: str, kind: MsgKind, body: Body) -> E2Message:
        return E2Message(kind=kind, cell=self.cell, e2=self.e2, seq=self.next_seq(side), body=body)
