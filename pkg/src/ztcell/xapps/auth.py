"""Multi-factor service authentication xApp.

A UE presents a 66-byte identity blob:

    token(16) | ue_id(8) | cell_id(4) | e2_id(4) | slice_id(2) | tag(32)

slice_id is zero outside re-authentication. The tag is HMAC-SHA256 over all
preceding bytes under a key chained from the scenario's shared secret through
the UE's credential factors, so one comparison binds every identifier while
each factor stays an individually countable verification step:

    possession  the token, issued RIC-side and rotated per transaction
    knowledge   the shared secret at the root of the key chain
    inherence   each static credential folded into the chain

The RAN node itself is verified first via a blob with the reserved ue_id 0;
UE requests from an unverified (cell, e2) pair are ignored outright and only
audit-logged. Verification holds the UE in a minimal verification slice for
`verify_frames` frames before the decision is made.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import struct
from dataclasses import dataclass
from random import Random

from .. import e2
from ..core import CellId, E2Id, SliceId, UeId
from ..e2 import AuthOutcome, AuthReason, MsgKind
from ..ric import InternalMessage, Xapp, XappContext

BLOB_LEN = 66
TOKEN_LEN = e2.TOKEN_LEN  # 16, shared with the wire format
TAG_LEN = 32
RAN_UE_ID = 0  # reserved: a blob carrying ue_id 0 authenticates the RAN node

NS_AUTH = "auth"
NS_SLICES = "slices"

KIND_VERIFY_START = "auth.verify_start"
KIND_GRANT = "auth.grant"
KIND_DENY = "auth.deny"
KIND_REVOKE = "auth.revoke"


# ---- pure protocol helpers (also used by the RAN-side blob builder) --------


def blob_key(secret: bytes, credential_chain: tuple[bytes, ...]) -> bytes:
    key = secret
    for cred in credential_chain:
        key = hmac.new(key, b"factor|" + cred, hashlib.sha256).digest()
    return key


def corrupt_chain(chain: tuple[bytes, ...]) -> tuple[bytes, ...]:
    if not chain:
        return (b"\xff" * 8,)
    bad = bytes(b ^ 0xFF for b in chain[0])
    return (bad,) + chain[1:]


def build_blob(
    token: bytes, ue: UeId, cell: CellId, e2_id: E2Id, slice_id: SliceId, key: bytes
) -> bytes:
    if len(token) != TOKEN_LEN:
        raise ValueError(f"token must be {TOKEN_LEN} bytes")
    body = token + struct.pack(">QIIH", ue, cell, e2_id, slice_id)
    tag = hmac.new(key, body, hashlib.sha256).digest()
    return body + tag


def parse_blob(blob: bytes) -> tuple[bytes, UeId, CellId, E2Id, SliceId, bytes]:
    if len(blob) != BLOB_LEN:
        raise ValueError(f"blob must be {BLOB_LEN} bytes, got {len(blob)}")
    token = blob[:TOKEN_LEN]
    ue, cell, e2_id, slice_id = struct.unpack(">QIIH", blob[TOKEN_LEN : TOKEN_LEN + 18])
    return token, ue, cell, e2_id, slice_id, blob[-TAG_LEN:]


def ran_identity_blob(secret: bytes, cell: CellId, e2_id: E2Id, ran_credential: bytes) -> bytes:
    key = blob_key(secret, (ran_credential,))
    return build_blob(bytes(TOKEN_LEN), RAN_UE_ID, cell, e2_id, 0, key)


@dataclass(frozen=True)
class AuthToken:
    token: bytes
    ue: UeId
    issued_frame: int
    expiry_frames: int


@dataclass(frozen=True)
class AuthDecision:
    ue: UeId
    outcome: AuthOutcome
    reason: AuthReason

    def __post_init__(self) -> None:
        if self.outcome is AuthOutcome.GRANTED and self.reason is not AuthReason.OK:
            raise ValueError("granted decisions must carry reason ok")


@dataclass
class AuthConfig:
    secret: bytes
    credentials: dict[UeId, tuple[bytes, ...]]
    ran_credential: bytes
    cell_id: CellId
    e2_id: E2Id
    rng_tokens: Random
    verification_budget_prbs: int = 2
    verify_frames: int = 2
    reauth_period_frames: int = 500
    token_expiry_frames: int = 1000
    usage_tolerance: float = 0.10
    per_prb_rate_mbps: float = 0.24
    report_period_frames: int = 10


class AuthXapp(Xapp):
    name = "auth"

    def __init__(self, config: AuthConfig) -> None:
        super().__init__()
        self.cfg = config
        self.verify_ops_log: list[tuple[UeId, int]] = []
        # pending verifications: ue -> (blob, due_frame); all durable state in SDL
        self._pending: dict[UeId, tuple[bytes, int]] = {}

    # ---- wiring ------------------------------------------------------------

    def on_init(self, ctx: XappContext) -> None:
        super().on_init(ctx)
        ctx.router.subscribe(self.name, [MsgKind.AUTH_REQUEST, MsgKind.KPM_INDICATION], self.handle)

    def on_frame_boundary(self, frame: int) -> None:
        self.frame = frame
        for ue in sorted(u for u, (_, due) in self._pending.items() if due <= frame):
            blob, _ = self._pending.pop(ue)
            self._decide_initial(ue, blob)

    def handle(self, msg: e2.E2Message) -> None:
        body = msg.body
        if isinstance(body, e2.AuthRequestBody):
            self._on_auth_request(msg, body.blob)
        elif isinstance(body, e2.KpmIndicationBody):
            self._track_usage(body.report.ue, body.report.throughput_mbps)

    # ---- token lifecycle ----------------------------------------------------

    def issue_token(self, ue: UeId) -> AuthToken:
        """Mint and store a fresh transaction token; the previous one dies."""
        token = AuthToken(
            token=self.cfg.rng_tokens.randbytes(TOKEN_LEN),
            ue=ue,
            issued_frame=self.frame,
            expiry_frames=self.cfg.token_expiry_frames,
        )
        packed = token.token + struct.pack(">QQ", token.issued_frame, token.expiry_frames)
        self.ctx.sdl.put(NS_AUTH, f"token:{ue}", packed)
        self.ctx.audit.record(
            self.frame * 10, self.name, "token_issued",
            f"ue {ue} token {token.token[:4].hex()}..", frame=self.frame, ue=ue,
        )
        return token

    def provision(self, ue: UeId) -> bytes:
        """Out-of-band token handover to the UE at attach time."""
        return self.issue_token(ue).token

    def _stored_token(self, ue: UeId) -> tuple[bytes, int, int] | None:
        entry = self.ctx.sdl.get(NS_AUTH, f"token:{ue}")
        if entry is None:
            return None
        raw, _ = entry
        issued, expiry = struct.unpack(">QQ", raw[TOKEN_LEN:])
        return raw[:TOKEN_LEN], issued, expiry

    # ---- RAN verification -----------------------------------------------------

    def _ran_key(self, cell: CellId, e2_id: E2Id) -> str:
        return f"ran:{cell}:{e2_id}"

    def ran_verified(self, cell: CellId, e2_id: E2Id) -> bool:
        return self.ctx.sdl.get(NS_AUTH, self._ran_key(cell, e2_id)) is not None

    def verify_ran(self, cell: CellId, e2_id: E2Id, blob: bytes) -> bool:
        expected = ran_identity_blob(self.cfg.secret, cell, e2_id, self.cfg.ran_credential)
        if hmac.compare_digest(blob, expected):
            self.ctx.sdl.put(NS_AUTH, self._ran_key(cell, e2_id), b"\x01")
            self.ctx.audit.record(
                self.frame * 10, self.name, "verified_ran",
                f"cell {cell} e2 {e2_id} verified", frame=self.frame,
            )
            return True
        self.ctx.audit.record(
            self.frame * 10, self.name, "ran_verify_failed",
            f"cell {cell} e2 {e2_id} presented a bad tag", frame=self.frame,
        )
        return False

    # ---- UE verification -------------------------------------------------------

    def _on_auth_request(self, msg: e2.E2Message, blob: bytes) -> None:
        try:
            _, ue, *_ = parse_blob(blob)
        except ValueError:
            ue = None
        if ue == RAN_UE_ID:
            self.verify_ran(msg.cell, msg.e2, blob)
            return
        if not self.ran_verified(msg.cell, msg.e2):
            # Everything from an unverified RAN node is ignored: no decision.
            self.ctx.audit.record(
                self.frame * 10, self.name, "auth_ignored",
                f"request from unverified cell {msg.cell} e2 {msg.e2}",
                frame=self.frame, ue=ue, reason="ran_unverified",
            )
            return
        if ue is None:
            return  # unparseable blob from a verified pair: nothing to decide on
        if self.ctx.sdl.get(NS_AUTH, f"grant:{ue}") is not None:
            self._decide_reauth(ue, blob)
            return
        # Fresh transaction: park the UE in a verification slice while checks run.
        self._pending[ue] = (blob, self.frame + self.cfg.verify_frames)
        self.ctx.audit.record(
            self.frame * 10, self.name, "auth_pending",
            f"ue {ue} under verification", frame=self.frame, ue=ue,
        )
        self.ctx.router.route(
            InternalMessage(KIND_VERIFY_START, self.name, {"ue": ue, "frame": self.frame})
        )

    def _verify_factors(self, ue: UeId, blob: bytes, expect_slice: SliceId | None) -> AuthReason:
        """Run the factor checks in order; first failure names the reason."""
        ops = 0
        try:
            token, blob_ue, cell, e2_id, slice_id, tag = parse_blob(blob)
        except ValueError:
            self.verify_ops_log.append((ue, 1))
            return AuthReason.BAD_TAG
        ops += 1
        # Possession: the token must be the one currently issued, and fresh.
        stored = self._stored_token(blob_ue)
        ops += 1
        if stored is None or not hmac.compare_digest(token, stored[0]):
            self.verify_ops_log.append((ue, ops))
            return AuthReason.UNKNOWN_TOKEN
        _, issued, expiry = stored
        if self.frame - issued >= expiry:
            self.verify_ops_log.append((ue, ops))
            return AuthReason.EXPIRED
        # Knowledge + inherence: rebuild the key chain from registered factors.
        chain = self.cfg.credentials.get(blob_ue, ())
        key = self.cfg.secret
        for cred in chain:
            key = hmac.new(key, b"factor|" + cred, hashlib.sha256).digest()
            ops += 1
        expected_tag = hmac.new(key, blob[: BLOB_LEN - TAG_LEN], hashlib.sha256).digest()
        ops += 1
        if not hmac.compare_digest(tag, expected_tag):
            self.verify_ops_log.append((ue, ops))
            return AuthReason.BAD_TAG
        # Identifier binding: tag-covered, but reject explicitly on mismatch.
        ops += 1
        if blob_ue != ue or cell != self.cfg.cell_id or e2_id != self.cfg.e2_id:
            self.verify_ops_log.append((ue, ops))
            return AuthReason.BAD_TAG
        if expect_slice is not None:
            ops += 1
            if slice_id != expect_slice:
                self.verify_ops_log.append((ue, ops))
                return AuthReason.SLICE_MISMATCH
        self.verify_ops_log.append((ue, ops))
        return AuthReason.OK

    def verify_ue(self, ue: UeId, blob: bytes, expect_slice: SliceId | None = 0) -> AuthDecision:
        """Evaluate a blob against the factor checks; no side effects."""
        reason = self._verify_factors(ue, blob, expect_slice)
        if reason is AuthReason.OK:
            return AuthDecision(ue, AuthOutcome.GRANTED, AuthReason.OK)
        return AuthDecision(ue, AuthOutcome.DENIED, reason)

    def _decide_initial(self, ue: UeId, blob: bytes) -> None:
        self._emit_decision(self.verify_ue(ue, blob, expect_slice=0), "auth")

    def _decide_reauth(self, ue: UeId, blob: bytes) -> None:
        bound = self._bound_slice(ue)
        reason = self._verify_factors(ue, blob, expect_slice=bound if bound is not None else 0)
        if reason is AuthReason.OK and not self._usage_within_slice(ue, bound):
            reason = AuthReason.SLICE_MISMATCH
        if reason is AuthReason.OK:
            self._emit_decision(AuthDecision(ue, AuthOutcome.GRANTED, AuthReason.OK), "reauth")
        elif reason is AuthReason.SLICE_MISMATCH:
            self._emit_decision(AuthDecision(ue, AuthOutcome.REVOKED, reason), "reauth")
        else:
            self._emit_decision(AuthDecision(ue, AuthOutcome.DENIED, reason), "reauth")

    def _emit_decision(self, decision: AuthDecision, action: str) -> None:
        ue = decision.ue
        token = bytes(TOKEN_LEN)
        if decision.outcome is AuthOutcome.GRANTED:
            token = self.issue_token(ue).token  # rotate for the next transaction
            self.ctx.sdl.put(NS_AUTH, f"grant:{ue}", struct.pack(">Q", self.frame))
            self.ctx.router.route(InternalMessage(KIND_GRANT, self.name, {"ue": ue}))
        else:
            self.ctx.sdl.delete(NS_AUTH, f"grant:{ue}")
            kind = KIND_REVOKE if decision.outcome is AuthOutcome.REVOKED else KIND_DENY
            self.ctx.router.route(InternalMessage(kind, self.name, {"ue": ue}))
        self.ctx.audit.record(
            self.frame * 10, self.name, action,
            f"ue {ue} {decision.outcome.name.lower()} ({decision.reason.name.lower()})",
            frame=self.frame, ue=ue,
            outcome=decision.outcome.name.lower(), reason=decision.reason.name.lower(),
        )
        self.ctx.send_e2(
            MsgKind.AUTH_RESPONSE,
            e2.AuthResponseBody(ue, decision.outcome, decision.reason, token),
        )

    # ---- periodic re-authentication support --------------------------------------

    def _track_usage(self, ue: UeId, throughput_mbps: float) -> None:
        entry = self.ctx.sdl.get(NS_AUTH, f"usage:{ue}")
        window = json.loads(entry[0]) if entry else []
        window.append(throughput_mbps)
        keep = max(1, self.cfg.reauth_period_frames // max(1, self.cfg.report_period_frames))
        window = window[-keep:]
        self.ctx.sdl.put(NS_AUTH, f"usage:{ue}", json.dumps(window).encode())

    def _bound_slice(self, ue: UeId) -> SliceId | None:
        entry = self.ctx.sdl.get(NS_SLICES, "table")
        if entry is None:
            return None
        table = json.loads(entry[0])
        value = table["bindings"].get(str(ue))
        return value

    def _slice_budget(self, slice_id: SliceId) -> int:
        entry = self.ctx.sdl.get(NS_SLICES, "table")
        if entry is None:
            return 0
        table = json.loads(entry[0])
        for spec in table["slices"]:
            if spec["id"] == slice_id:
                return spec["budget"]
        return 0

    def _usage_within_slice(self, ue: UeId, slice_id: SliceId | None) -> bool:
        """RAN-reported mean throughput must fit the registered slice capacity."""
        if slice_id is None:
            return True
        entry = self.ctx.sdl.get(NS_AUTH, f"usage:{ue}")
        if entry is None:
            return True
        window = json.loads(entry[0])
        if not window:
            return True
        mean = sum(window) / len(window)
        capacity = self._slice_budget(slice_id) * self.cfg.per_prb_rate_mbps
        return mean <= capacity * (1.0 + self.cfg.usage_tolerance)
