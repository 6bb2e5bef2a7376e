"""Near-RT RIC skeleton: message router, shared data layer, xApp registry.

xApps run cooperatively: the frame loop drains message queues between radio
frames and dispatches synchronously, so no component ever observes a
partially advanced frame. The router is the only cross-xApp channel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

from . import e2
from .e2 import DecodeError, E2Message, MsgKind


class RegistrationError(ValueError):
    pass


class SubscriptionError(ValueError):
    pass


@dataclass
class AuditLog:
    """Append-only JSON-lines audit trail (dead letters, replays, decisions)."""

    entries: list[dict] = field(default_factory=list)

    def record(self, time_ms: int, actor: str, action: str, detail: str, **extra: Any) -> None:
        entry = {"time_ms": time_ms, "actor": actor, "action": action, "detail": detail}
        entry.update(extra)
        self.entries.append(entry)

    def scan(self, action: str) -> list[dict]:
        return [e for e in self.entries if e["action"] == action]

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry) + "\n")


class Sdl:
    """In-memory shared data layer: namespaced keys, per-key write versions."""

    def __init__(self) -> None:
        self._store: dict[tuple[str, str], tuple[bytes, int]] = {}

    def put(self, namespace: str, key: str, value: bytes) -> int:
        if not isinstance(value, bytes):
            raise TypeError("SDL values are byte sequences")
        _, version = self._store.get((namespace, key), (b"", 0))
        version += 1
        self._store[(namespace, key)] = (value, version)
        return version

    def get(self, namespace: str, key: str) -> tuple[bytes, int] | None:
        return self._store.get((namespace, key))

    def delete(self, namespace: str, key: str) -> None:
        self._store.pop((namespace, key), None)

    def keys(self, namespace: str) -> list[str]:
        return [k for (ns, k) in self._store if ns == namespace]

    def snapshot(self) -> dict[str, dict[str, str]]:
        out: dict[str, dict[str, str]] = {}
        for (ns, key), (value, version) in self._store.items():
            out.setdefault(ns, {})[key] = f"v{version}:{value.hex()}"
        return out


@dataclass(frozen=True)
class InternalMessage:
    """xApp-to-xApp message routed alongside E2 traffic, keyed by a kind string."""

    kind: str
    source: str
    payload: Any


RoutableKind = MsgKind | str
Handler = Callable[[Any], None]


class Router:
    """Pub/sub by message kind with per-source FIFO delivery.

    E2 ingress decodes frames, drops stale sequence numbers with an audit
    record, and fans each message out to every subscriber of its kind in
    subscription order. Deliveries carry unique ids; a message with no
    subscriber lands in the dead-letter log, which is not an error.
    """

    def __init__(self, audit: AuditLog) -> None:
        self.audit = audit
        self._subs: list[tuple[int, str, RoutableKind, Handler]] = []
        self._sub_keys: set[tuple[str, RoutableKind]] = set()
        self._next_sub = 1
        self._last_seq: dict[tuple[int, int], int] = {}
        self.delivery_ids: list[int] = []
        self._next_delivery = 1
        self.now_ms: int = 0

    def subscribe(self, xapp: str, kinds: set[RoutableKind] | list[RoutableKind], handler: Handler) -> None:
        for kind in kinds:
            if (xapp, kind) in self._sub_keys:
                raise SubscriptionError(f"{xapp} already subscribed to {kind}")
            self._sub_keys.add((xapp, kind))
            self._subs.append((self._next_sub, xapp, kind, handler))
            self._next_sub += 1

    def unsubscribe_all(self, xapp: str) -> None:
        self._subs = [s for s in self._subs if s[1] != xapp]
        self._sub_keys = {k for k in self._sub_keys if k[0] != xapp}

    def ingest_frame(self, data: bytes) -> None:
        """Decode one RAN frame, enforce seq monotonicity, then route."""
        try:
            msg = e2.decode(data)
        except DecodeError as err:
            self.audit.record(self.now_ms, "router", "decode_error", str(err))
            return
        conn = (msg.cell, msg.e2)
        last = self._last_seq.get(conn, 0)
        if msg.seq <= last:
            self.audit.record(
                self.now_ms,
                "router",
                "replay_dropped",
                f"seq {msg.seq} <= last {last} on cell {msg.cell} e2 {msg.e2}",
            )
            return
        self._last_seq[conn] = msg.seq
        self.route(msg)

    def route(self, msg: E2Message | InternalMessage) -> int:
        kind: RoutableKind = msg.kind
        delivered = 0
        for _, _, sub_kind, handler in list(self._subs):
            if sub_kind == kind:
                self.delivery_ids.append(self._next_delivery)
                self._next_delivery += 1
                handler(msg)
                delivered += 1
        if delivered == 0:
            name = kind.name if isinstance(kind, MsgKind) else kind
            self.audit.record(self.now_ms, "router", "dead_letter", f"no subscriber for {name}")
        return delivered


@dataclass
class XappContext:
    """Handles given to an xApp at init: router, SDL, audit, E2 egress."""

    router: Router
    sdl: Sdl
    audit: AuditLog
    send_e2: Callable[[MsgKind, Any], None]
    config: Any = None


class Xapp:
    """Base xApp: subclasses subscribe in on_init and handle deliveries."""

    name = "xapp"

    def __init__(self) -> None:
        self.ctx: XappContext | None = None
        self.frame = 0

    def on_init(self, ctx: XappContext) -> None:
        self.ctx = ctx

    def on_frame_boundary(self, frame: int) -> None:
        pass


class XappRegistry:
    def __init__(self, audit: AuditLog) -> None:
        self.audit = audit
        self._xapps: dict[str, tuple[int, Xapp]] = {}
        self._next_id = 1

    def register(self, xapp: Xapp, ctx: XappContext) -> int:
        if xapp.name in self._xapps:
            raise RegistrationError(f"xApp {xapp.name!r} already registered")
        xapp_id = self._next_id
        self._next_id += 1
        self._xapps[xapp.name] = (xapp_id, xapp)
        xapp.on_init(ctx)
        return xapp_id

    def unregister(self, name: str) -> None:
        if name not in self._xapps:
            raise RegistrationError(f"xApp {name!r} not registered")
        _, xapp = self._xapps.pop(name)
        if xapp.ctx is not None:
            xapp.ctx.router.unsubscribe_all(name)

    def registered(self) -> list[str]:
        return list(self._xapps)

    def frame_boundary(self, frame: int) -> None:
        # Two passes: every xApp sees the new frame number before any of them
        # does boundary work, so cross-xApp cascades stamp the right epoch.
        for _, xapp in self._xapps.values():
            xapp.frame = frame
        for _, xapp in self._xapps.values():
            xapp.on_frame_boundary(frame)
