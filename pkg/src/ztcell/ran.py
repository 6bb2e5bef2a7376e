"""Discrete-event cell model advancing in 10 ms radio frames.

Per frame: new traffic is enqueued per each UE's traffic model, then the MAC
scheduler drains queues. With zero-trust slicing active every bound UE drains
up to its own slice capacity in FIFO order; in legacy mode one shared FIFO
across all UEs' packets is served from the whole PRB pool, ordered by arrival.

Packet latency is quantized to whole frames: a packet enqueued in frame a and
fully served in frame f took (f - a + 1) frames. Arrival order within a frame
is tracked at sub-frame resolution purely as the FIFO interleaving key.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from random import Random

from . import e2
from .core import CellId, E2Id, KPMReport, PRBMask, SliceId, SliceKind, UeId
from .xapps.auth import blob_key, build_blob, corrupt_chain, ran_identity_blob


class AttachError(ValueError):
    pass


class InvariantError(RuntimeError):
    """A frame-stamped breach of a scheduler or state invariant."""

    def __init__(self, frame: int, detail: str) -> None:
        super().__init__(f"frame {frame}: {detail}")
        self.frame = frame


class AuthState(Enum):
    UNAUTHENTICATED = "unauthenticated"
    VERIFYING = "verifying"
    GRANTED = "granted"
    DENIED = "denied"
    ISOLATED = "isolated"


@dataclass(frozen=True)
class CellConfig:
    total_prbs: int = 100
    bandwidth_mhz: float = 20.0
    per_prb_rate_mbps: float = 0.24
    frame_ms: int = 10  # fixed radio-frame granularity
    cell_id: CellId = 1
    e2_id: E2Id = 1

    def __post_init__(self) -> None:
        if self.total_prbs < 1:
            raise ValueError("total_prbs must be >= 1")
        if self.per_prb_rate_mbps <= 0:
            raise ValueError("per_prb_rate_mbps must be > 0")
        if self.frame_ms != 10:
            raise ValueError("frame_ms is fixed at 10")

    @property
    def prb_bits_per_frame(self) -> int:
        # 1 Mbps over one 10 ms frame is 10_000 bits.
        return round(self.per_prb_rate_mbps * self.frame_ms * 1000)

    @property
    def cell_bits_per_frame(self) -> int:
        return self.total_prbs * self.prb_bits_per_frame


@dataclass(frozen=True)
class TrafficModel:
    kind: str  # cbr | uniform_rate | flood | idle
    rate_mbps: float = 0.0
    lo_mbps: float = 0.0
    hi_mbps: float = 0.0
    onset_frame: int = 0  # flood only: silent before this frame
    packet_size_bytes: int = 1500

    def __post_init__(self) -> None:
        if self.kind not in ("cbr", "uniform_rate", "flood", "idle"):
            raise ValueError(f"unknown traffic kind {self.kind!r}")
        if self.kind in ("cbr", "flood") and self.rate_mbps <= 0:
            raise ValueError("rate_mbps must be > 0")
        if self.kind == "uniform_rate":
            if self.lo_mbps <= 0 or self.lo_mbps > self.hi_mbps:
                raise ValueError("uniform_rate needs 0 < lo <= hi")
        if self.packet_size_bytes < 1:
            raise ValueError("packet_size_bytes must be >= 1")

    def bits_in_frame(self, frame: int, frame_ms: int, rng: Random) -> float:
        if self.kind == "idle":
            return 0.0
        if self.kind == "cbr":
            rate = self.rate_mbps
        elif self.kind == "uniform_rate":
            rate = rng.uniform(self.lo_mbps, self.hi_mbps)
        else:  # flood
            rate = self.rate_mbps if frame >= self.onset_frame else 0.0
        return rate * frame_ms * 1000.0


@dataclass(frozen=True)
class RadioProfile:
    snr_mean_db: float = 25.0
    snr_std_db: float = 2.0
    cqi_mean: float = 12.0
    cqi_std: float = 1.5
    tx_power_mean_dbm: float = 20.0
    tx_power_std_dbm: float = 1.0

    def as_dict(self) -> dict[str, float]:
        return {
            "snr_db": self.snr_mean_db,
            "cqi": self.cqi_mean,
            "tx_power_dbm": self.tx_power_mean_dbm,
        }


class Packet:
    __slots__ = ("bits_left", "arrival_frame", "order_key", "seq")

    def __init__(self, bits: int, arrival_frame: int, order_key: float, seq: int) -> None:
        self.bits_left = bits
        self.arrival_frame = arrival_frame
        self.order_key = order_key
        self.seq = seq


@dataclass
class UeState:
    id: UeId
    traffic: TrafficModel
    radio: RadioProfile
    rng_traffic: Random
    rng_radio: Random
    auth_state: AuthState = AuthState.UNAUTHENTICATED
    slice_id: SliceId | None = None
    token: bytes | None = None
    credential_chain: tuple[bytes, ...] = ()
    granted_frame: int | None = None
    queue: deque = field(default_factory=deque)
    bits_accum: float = 0.0
    pkt_seq: int = 0
    kpm_seq: int = 0
    window_arrived_pkts: int = 0
    window_served_bits: int = 0

    def queue_bits(self) -> int:
        return sum(p.bits_left for p in self.queue)


@dataclass(frozen=True)
class UeFrameStats:
    served_bits: int
    arrived_bits: int
    queue_bytes: int
    hol_latency_ms: int | None
    mean_latency_ms: float | None
    auth_state: str
    slice_id: SliceId | None


@dataclass(frozen=True)
class FrameReport:
    frame_index: int
    per_ue: dict[UeId, UeFrameStats]


class RanCell:
    """One cell plus its E2 connection; the runner drains `outbox` between frames."""

    def __init__(self, config: CellConfig, secret: bytes, zero_trust: bool = True) -> None:
        self.cfg = config
        self.secret = secret
        self.zero_trust = zero_trust
        self.conn = e2.Connection(config.cell_id, config.e2_id)
        self.outbox: list[bytes] = []
        self.frame_index = 0
        self.ues: dict[UeId, UeState] = {}
        self.ue_order: list[UeId] = []
        self.slice_masks: dict[SliceId, PRBMask] = {}
        self.slice_kinds: dict[SliceId, SliceKind] = {}
        self.table_epoch: int | None = None
        self.report_period_frames: int | None = None
        self.ue_filter: tuple[UeId, ...] | None = None
        self.reauth_period_frames: int = 0  # 0 disables RAN-driven re-auth

    # ---- E2 egress -------------------------------------------------------

    def _send(self, kind: e2.MsgKind, body) -> None:
        self.outbox.append(e2.encode(self.conn.make("ran", kind, body)))

    def connect(self, ran_credential: bytes) -> None:
        """Present the RAN's own identity blob so the RIC can verify this node."""
        blob = ran_identity_blob(self.secret, self.cfg.cell_id, self.cfg.e2_id, ran_credential)
        self._send(e2.MsgKind.AUTH_REQUEST, e2.AuthRequestBody(blob))

    # ---- attach / auth ----------------------------------------------------

    def attach(
        self,
        ue: UeId,
        traffic: TrafficModel,
        radio: RadioProfile,
        rng_traffic: Random,
        rng_radio: Random,
        credential_chain: tuple[bytes, ...] = (),
        token: bytes | None = None,
        cred_mode: str = "valid",
    ) -> None:
        if ue in self.ues:
            raise AttachError(f"UE {ue} already attached")
        state = UeState(
            id=ue,
            traffic=traffic,
            radio=radio,
            rng_traffic=rng_traffic,
            rng_radio=rng_radio,
            credential_chain=credential_chain,
            token=token,
        )
        self.ues[ue] = state
        self.ue_order.append(ue)
        if not self.zero_trust:
            return  # legacy cell: no authentication traffic, shared scheduling
        self._send_auth_request(state, slice_id=0, cred_mode=cred_mode)
        state.auth_state = AuthState.VERIFYING

    def _send_auth_request(self, ue: UeState, slice_id: int, cred_mode: str) -> None:
        token = ue.token if ue.token is not None else bytes(e2.TOKEN_LEN)
        chain = ue.credential_chain
        if cred_mode == "wrong_token":
            bad = Random(f"badtoken/{ue.id}")
            token = bad.randbytes(e2.TOKEN_LEN)
        elif cred_mode == "wrong_credential":
            chain = corrupt_chain(chain)
        key = blob_key(self.secret, chain)
        blob = build_blob(token, ue.id, self.cfg.cell_id, self.cfg.e2_id, slice_id, key)
        self._send(e2.MsgKind.AUTH_REQUEST, e2.AuthRequestBody(blob))

    def maybe_reauth(self, frame: int, cred_mode_of=None) -> None:
        """Re-present credentials for granted UEs on the configured period."""
        if not self.zero_trust or self.reauth_period_frames <= 0:
            return
        for ue_id in self.ue_order:
            ue = self.ues[ue_id]
            if ue.auth_state is not AuthState.GRANTED or ue.granted_frame is None:
                continue
            age = frame - ue.granted_frame
            if age > 0 and age % self.reauth_period_frames == 0:
                mode = cred_mode_of(ue_id) if cred_mode_of else "valid"
                self._send_auth_request(ue, slice_id=ue.slice_id or 0, cred_mode=mode)

    # ---- E2 ingress -------------------------------------------------------

    def handle_frame(self, data: bytes) -> None:
        msg = e2.decode(data)
        body = msg.body
        if isinstance(body, e2.AuthResponseBody):
            self._on_auth_response(body)
        elif isinstance(body, e2.SliceControlBody):
            self.apply_slice_control(body)
        elif isinstance(body, e2.SubscriptionRequestBody):
            self.report_period_frames = body.report_period_ms // self.cfg.frame_ms
            self.ue_filter = body.ue_filter
            self._send(e2.MsgKind.SUBSCRIPTION_ACK, e2.SubscriptionAckBody(body.report_period_ms))

    def _on_auth_response(self, body: e2.AuthResponseBody) -> None:
        ue = self.ues.get(body.ue)
        if ue is None:
            return
        if body.outcome is e2.AuthOutcome.GRANTED:
            if ue.auth_state is not AuthState.ISOLATED:
                ue.auth_state = AuthState.GRANTED
            ue.token = body.token
            if ue.granted_frame is None:
                ue.granted_frame = self.frame_index
        else:  # denied or revoked: service stops until a fresh attach
            ue.auth_state = AuthState.DENIED
            ue.slice_id = None
            ue.granted_frame = None
            ue.token = None

    def apply_slice_control(self, body: e2.SliceControlBody) -> None:
        """Install a new slice table; callers only invoke this on frame boundaries."""
        self.slice_masks = {s.id: s.mask for s in body.slices}
        self.slice_kinds = {s.id: s.kind for s in body.slices}
        bound = dict(body.bindings)
        for ue_id, ue in self.ues.items():
            new = bound.get(ue_id)
            ue.slice_id = new
            if new is not None and self.slice_kinds[new] is SliceKind.RESTRICTED:
                ue.auth_state = AuthState.ISOLATED
        self.table_epoch = self.frame_index

    # ---- frame advance ----------------------------------------------------

    def _check_invariants(self) -> None:
        f = self.frame_index
        for ue_id, ue in self.ues.items():
            if ue.auth_state in (AuthState.GRANTED, AuthState.ISOLATED) and ue.slice_id is None:
                raise InvariantError(f, f"UE {ue_id} is {ue.auth_state.value} but unbound")
            if ue.auth_state in (AuthState.UNAUTHENTICATED, AuthState.DENIED) and ue.slice_id is not None:
                raise InvariantError(f, f"UE {ue_id} is {ue.auth_state.value} but bound")
            if ue.slice_id is not None and ue.slice_id not in self.slice_masks:
                raise InvariantError(f, f"UE {ue_id} bound to unknown slice {ue.slice_id}")

    def _enqueue_traffic(self, ue: UeState) -> int:
        f = self.frame_index
        bits = ue.traffic.bits_in_frame(f, self.cfg.frame_ms, ue.rng_traffic)
        ue.bits_accum += bits
        pkt_bits = ue.traffic.packet_size_bytes * 8
        n = int(ue.bits_accum // pkt_bits)
        if n <= 0:
            return 0
        ue.bits_accum -= n * pkt_bits
        base = f * self.cfg.frame_ms
        for j in range(n):
            key = base + self.cfg.frame_ms * (2 * j + 1) / (2 * n)
            ue.queue.append(Packet(pkt_bits, f, key, ue.pkt_seq))
            ue.pkt_seq += 1
        ue.window_arrived_pkts += n
        return n * pkt_bits

    def _drain(self, ue: UeState, capacity: int, latencies: list[int]) -> int:
        served = 0
        f = self.frame_index
        while capacity > 0 and ue.queue:
            head = ue.queue[0]
            take = min(head.bits_left, capacity)
            head.bits_left -= take
            served += take
            capacity -= take
            if head.bits_left == 0:
                ue.queue.popleft()
                latencies.append((f - head.arrival_frame + 1) * self.cfg.frame_ms)
        return served

    def step_frame(self) -> FrameReport:
        if self.zero_trust:
            self._check_invariants()
        f = self.frame_index
        arrived: dict[UeId, int] = {}
        for ue_id in self.ue_order:
            arrived[ue_id] = self._enqueue_traffic(self.ues[ue_id])

        served: dict[UeId, int] = {u: 0 for u in self.ue_order}
        latencies: dict[UeId, list[int]] = {u: [] for u in self.ue_order}
        if self.zero_trust:
            for ue_id in self.ue_order:
                ue = self.ues[ue_id]
                if ue.slice_id is None:
                    continue
                cap = self.slice_masks[ue.slice_id].popcount() * self.cfg.prb_bits_per_frame
                served[ue_id] = self._drain(ue, cap, latencies[ue_id])
                if served[ue_id] > cap:
                    raise InvariantError(f, f"UE {ue_id} served over slice capacity")
        else:
            cap_left = self.cfg.cell_bits_per_frame
            while cap_left > 0:
                head_ue = None
                head_key = None
                for idx, ue_id in enumerate(self.ue_order):
                    q = self.ues[ue_id].queue
                    if not q:
                        continue
                    key = (q[0].order_key, idx, q[0].seq)
                    if head_key is None or key < head_key:
                        head_key = key
                        head_ue = ue_id
                if head_ue is None:
                    break
                ue = self.ues[head_ue]
                head = ue.queue[0]
                take = min(head.bits_left, cap_left)
                head.bits_left -= take
                served[head_ue] += take
                cap_left -= take
                if head.bits_left == 0:
                    ue.queue.popleft()
                    latencies[head_ue].append((f - head.arrival_frame + 1) * self.cfg.frame_ms)
            if sum(served.values()) > self.cfg.cell_bits_per_frame:
                raise InvariantError(f, "cell served over shared capacity")

        per_ue: dict[UeId, UeFrameStats] = {}
        for ue_id in self.ue_order:
            ue = self.ues[ue_id]
            ue.window_served_bits += served[ue_id]
            lat = latencies[ue_id]
            hol = None
            if ue.queue:
                hol = (f - ue.queue[0].arrival_frame + 1) * self.cfg.frame_ms
            per_ue[ue_id] = UeFrameStats(
                served_bits=served[ue_id],
                arrived_bits=arrived[ue_id],
                queue_bytes=ue.queue_bits() // 8,
                hol_latency_ms=hol,
                mean_latency_ms=sum(lat) / len(lat) if lat else None,
                auth_state=ue.auth_state.value,
                slice_id=ue.slice_id,
            )
        report = FrameReport(frame_index=f, per_ue=per_ue)
        self.frame_index += 1
        return report

    # ---- KPM reporting ----------------------------------------------------

    def collect_kpm(self, ue_id: UeId, period_ms: int) -> KPMReport:
        """Build one report for the window that just ended and reset counters."""
        ue = self.ues[ue_id]
        snr = ue.rng_radio.gauss(ue.radio.snr_mean_db, ue.radio.snr_std_db)
        cqi = min(15, max(0, round(ue.rng_radio.gauss(ue.radio.cqi_mean, ue.radio.cqi_std))))
        power = ue.rng_radio.gauss(ue.radio.tx_power_mean_dbm, ue.radio.tx_power_std_dbm)
        ue.kpm_seq += 1
        report = KPMReport(
            ue=ue_id,
            cell=self.cfg.cell_id,
            seq=ue.kpm_seq,
            snr_db=snr,
            cqi=cqi,
            tx_packets=ue.window_arrived_pkts,
            tx_power_dbm=power,
            throughput_mbps=ue.window_served_bits / (period_ms * 1000.0),
        )
        ue.window_arrived_pkts = 0
        ue.window_served_bits = 0
        return report

    def emit_kpm_if_due(self) -> None:
        """Send per-UE indications when a report window closed at this boundary."""
        if self.report_period_frames is None or self.frame_index == 0:
            return
        if self.frame_index % self.report_period_frames:
            return
        period_ms = self.report_period_frames * self.cfg.frame_ms
        targets = self.ue_filter if self.ue_filter is not None else tuple(self.ue_order)
        for ue_id in targets:
            if ue_id in self.ues:
                report = self.collect_kpm(ue_id, period_ms)
                self._send(e2.MsgKind.KPM_INDICATION, e2.KpmIndicationBody(report))
