"""Experiment orchestration: the frame loop, metric logs, and run summaries.

A run wires one RAN cell to the RIC over the binary E2 codec and advances
in 10 ms frames. At each frame boundary the message queues are drained to
quiescence, so an indication emitted at the end of frame f can trigger a
verdict, an isolation, and a slice-control message that all take effect at
the start of frame f+1 and never mid-frame. Everything is driven by named
RNG streams derived from the scenario seed, making outputs byte-identical
across runs; legacy runs reuse the same traffic streams so arrivals match
the zero-trust run frame for frame.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from random import Random

from . import e2
from .ran import FrameReport, RanCell
from .ric import AuditLog, Router, Sdl, XappContext, XappRegistry
from .scenario import Scenario, resolved_lines
from .xapps.auth import AuthConfig, AuthXapp
from .xapps.intrusion import (
    FprEstimate,
    IntrusionConfig,
    IntrusionXapp,
    ProfileModel,
    build_profile,
    estimate_fpr,
    warmup_history,
    write_fpr_csv,
)
from .xapps.slicing import SlicingConfig, SlicingXapp

FRAMES_CSV_HEADER = "frame_index,ue,served_bits,queue_bytes,latency_ms,auth_state,slice_id"


@dataclass
class RunSummary:
    scenario: str
    zero_trust: bool
    seed: int
    duration_frames: int
    latency_threshold_ms: int
    latency_exceedance: float
    peak_latency_ms: float
    detection_frame: int | None
    isolation_frame: int | None
    per_ue: dict[int, dict]
    fpr_curve: str | None = None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "zero_trust": self.zero_trust,
            "seed": self.seed,
            "duration_frames": self.duration_frames,
            "latency_threshold_ms": self.latency_threshold_ms,
            "latency_exceedance": self.latency_exceedance,
            "peak_latency_ms": self.peak_latency_ms,
            "detection_frame": self.detection_frame,
            "isolation_frame": self.isolation_frame,
            "per_ue": {str(k): v for k, v in self.per_ue.items()},
            "fpr_curve": self.fpr_curve,
        }


@dataclass
class RunResult:
    scenario: Scenario
    zero_trust: bool
    seed: int
    frames: list[FrameReport]
    audit: AuditLog
    summary: RunSummary
    cell: RanCell
    out_dir: Path | None = None
    slicing: SlicingXapp | None = None
    auth: AuthXapp | None = None
    intrusion: IntrusionXapp | None = None
    router: Router | None = None
    sdl: Sdl | None = None


def _profile_model(spec, report_period_ms: int) -> ProfileModel:
    return ProfileModel(
        ue=spec.ue,
        gauss_fields={
            "snr_db": (spec.radio.snr_mean_db, spec.radio.snr_std_db),
            "cqi": (spec.radio.cqi_mean, spec.radio.cqi_std),
            "tx_power_dbm": (spec.radio.tx_power_mean_dbm, spec.radio.tx_power_std_dbm),
        },
        rate_lo_mbps=spec.profile_rate_lo_mbps,
        rate_hi_mbps=spec.profile_rate_hi_mbps,
        packet_size_bytes=spec.traffic.packet_size_bytes,
        report_period_ms=report_period_ms,
    )


def run(
    sc: Scenario,
    out_dir: str | Path | None = None,
    legacy: bool = False,
    seed: int | None = None,
) -> RunResult:
    zero_trust = sc.zero_trust and not legacy
    eff_seed = sc.seed if seed is None else seed
    secret = sc.secret()

    audit = AuditLog()
    cell = RanCell(sc.cell, secret, zero_trust=zero_trust)
    cell.reauth_period_frames = sc.auth.reauth_period_frames if zero_trust else 0

    router = Router(audit)
    sdl = Sdl()
    registry = XappRegistry(audit)
    ric_outbox: list[bytes] = []

    def send_e2(kind: e2.MsgKind, body) -> None:
        ric_outbox.append(e2.encode(cell.conn.make("ric", kind, body)))

    auth_x = intr_x = slic_x = None
    if zero_trust:
        ctx = XappContext(router=router, sdl=sdl, audit=audit, send_e2=send_e2)
        auth_x = AuthXapp(
            AuthConfig(
                secret=secret,
                credentials={u.ue: (u.credential,) for u in sc.ues},
                ran_credential=sc.ran_credential(),
                cell_id=sc.cell.cell_id,
                e2_id=sc.cell.e2_id,
                rng_tokens=Random(f"{eff_seed}/auth/tokens"),
                verification_budget_prbs=sc.auth.verification_budget_prbs,
                verify_frames=sc.auth.verify_frames,
                reauth_period_frames=sc.auth.reauth_period_frames,
                token_expiry_frames=sc.auth.token_expiry_frames,
                usage_tolerance=sc.auth.usage_tolerance,
                per_prb_rate_mbps=sc.cell.per_prb_rate_mbps,
                report_period_frames=sc.report_period_ms // sc.cell.frame_ms,
            )
        )
        intr_x = IntrusionXapp(
            IntrusionConfig(
                detection=sc.detection,
                models={u.ue: _profile_model(u, sc.report_period_ms) for u in sc.ues},
                report_period_ms=sc.report_period_ms,
                seed=eff_seed,
            )
        )
        slic_x = SlicingXapp(
            SlicingConfig(
                total_prbs=sc.cell.total_prbs,
                restricted=sc.restricted,
                verification_budget_prbs=sc.auth.verification_budget_prbs,
                ue_policies=sc.ue_policies(),
            )
        )
        registry.register(auth_x, ctx)
        registry.register(intr_x, ctx)
        registry.register(slic_x, ctx)
        cell.connect(sc.ran_credential())

    def pump() -> None:
        while cell.outbox or ric_outbox:
            to_ric = cell.outbox
            cell.outbox = []
            for data in to_ric:
                router.ingest_frame(data)
            to_ran = ric_outbox[:]
            ric_outbox.clear()
            for data in to_ran:
                cell.handle_frame(data)

    cred_mode = {u.ue: u.credentials for u in sc.ues}
    frames: list[FrameReport] = []
    for f in range(sc.duration_frames):
        router.now_ms = f * sc.cell.frame_ms
        registry.frame_boundary(f)
        for spec in sc.ues:
            if spec.attach_frame == f:
                token = auth_x.provision(spec.ue) if zero_trust else None
                cell.attach(
                    spec.ue,
                    traffic=spec.traffic,
                    radio=spec.radio,
                    rng_traffic=Random(f"{eff_seed}/ue{spec.ue}/traffic"),
                    rng_radio=Random(f"{eff_seed}/ue{spec.ue}/radio"),
                    credential_chain=(spec.credential,),
                    token=token,
                    cred_mode=spec.credentials,
                )
        cell.maybe_reauth(f, cred_mode_of=cred_mode.get)
        pump()
        frames.append(cell.step_frame())
        cell.emit_kpm_if_due()
    router.now_ms = sc.duration_frames * sc.cell.frame_ms
    registry.frame_boundary(sc.duration_frames)
    pump()

    rows = frames_to_rows(frames, [u.ue for u in sc.ues])
    meta = {
        "scenario": sc.name,
        "zero_trust": zero_trust,
        "seed": eff_seed,
        "duration_frames": sc.duration_frames,
        "report_period_ms": sc.report_period_ms,
        "latency_threshold_ms": sc.latency_threshold_ms,
        "ues": {
            str(u.ue): {
                "traffic": u.traffic.kind,
                "credentials": u.credentials,
                "legitimate": u.legitimate,
            }
            for u in sc.ues
        },
    }
    summary = summarize_rows(rows, audit.entries, meta, sc.latency_threshold_ms)

    result = RunResult(
        scenario=sc,
        zero_trust=zero_trust,
        seed=eff_seed,
        frames=frames,
        audit=audit,
        summary=summary,
        cell=cell,
        slicing=slic_x,
        auth=auth_x,
        intrusion=intr_x,
        router=router,
        sdl=sdl,
    )
    if out_dir is not None:
        result.out_dir = Path(out_dir)
        _write_outputs(result, rows, meta)
    return result


def frames_to_rows(frames: list[FrameReport], ue_order: list[int]) -> list[dict]:
    rows = []
    for report in frames:
        for ue in ue_order:
            stats = report.per_ue.get(ue)
            if stats is None:
                continue
            rows.append(
                {
                    "frame_index": report.frame_index,
                    "ue": ue,
                    "served_bits": stats.served_bits,
                    "queue_bytes": stats.queue_bytes,
                    "latency_ms": stats.mean_latency_ms,
                    "auth_state": stats.auth_state,
                    "slice_id": stats.slice_id,
                }
            )
    return rows


def summarize_rows(
    rows: list[dict], audit_entries: list[dict], meta: dict, latency_threshold_ms: int
) -> RunSummary:
    duration = meta["duration_frames"]
    legit = {int(u) for u, info in meta["ues"].items() if info["legitimate"]}

    detection_frame = None
    isolation_frame = None
    for entry in audit_entries:
        if entry["action"] == "intrusion_flag" and detection_frame is None:
            detection_frame = entry["frame"]
        if entry["action"] == "isolate" and isolation_frame is None:
            isolation_frame = entry["frame"]

    exceed_frames: set[int] = set()
    peak = 0.0
    for row in rows:
        if row["ue"] in legit and row["latency_ms"] is not None:
            peak = max(peak, row["latency_ms"])
            if row["latency_ms"] > latency_threshold_ms:
                exceed_frames.add(row["frame_index"])

    per_ue: dict[int, dict] = {}
    all_ues = sorted({row["ue"] for row in rows})
    for ue in all_ues:
        served = [row["served_bits"] for row in rows if row["ue"] == ue]
        frames_of = [row["frame_index"] for row in rows if row["ue"] == ue]
        by_frame = dict(zip(frames_of, served))

        def mean_mbps(lo: int, hi: int) -> float | None:
            bits = [by_frame[f] for f in range(lo, hi) if f in by_frame]
            if not bits:
                return None
            return sum(bits) / len(bits) / 10_000.0  # bits per 10 ms frame -> Mbps

        pre_end = detection_frame if detection_frame is not None else duration
        per_ue[ue] = {
            "legitimate": ue in legit,
            "pre_detection_mbps": mean_mbps(0, pre_end),
            "post_isolation_mbps": (
                mean_mbps(isolation_frame, duration) if isolation_frame is not None else None
            ),
            "mean_mbps": mean_mbps(0, duration),
        }

    return RunSummary(
        scenario=meta["scenario"],
        zero_trust=meta["zero_trust"],
        seed=meta["seed"],
        duration_frames=duration,
        latency_threshold_ms=latency_threshold_ms,
        latency_exceedance=len(exceed_frames) / duration if duration else 0.0,
        peak_latency_ms=peak,
        detection_frame=detection_frame,
        isolation_frame=isolation_frame,
        per_ue=per_ue,
    )


def _write_outputs(result: RunResult, rows: list[dict], meta: dict) -> None:
    out = result.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "frames.csv", "w", newline="") as fh:
        fh.write(FRAMES_CSV_HEADER + "\n")
        for row in rows:
            latency = "" if row["latency_ms"] is None else f"{row['latency_ms']:.3f}"
            slice_id = "" if row["slice_id"] is None else row["slice_id"]
            fh.write(
                f"{row['frame_index']},{row['ue']},{row['served_bits']},"
                f"{row['queue_bytes']},{latency},{row['auth_state']},{slice_id}\n"
            )
    result.audit.dump(str(out / "audit.jsonl"))
    if result.slicing is not None:
        result.slicing.write_changes_csv(str(out / "slice_changes.csv"))
    else:
        (out / "slice_changes.csv").write_text("frame,ue,old_slice,new_slice,cause\n")
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    with open(out / "summary.json", "w") as fh:
        json.dump(result.summary.to_dict(), fh, indent=2, sort_keys=True)
    mode = "zero-trust" if result.zero_trust else "legacy"
    lines = [f"# run: {meta['scenario']} mode={mode} seed={result.seed}"]
    lines += resolved_lines(result.scenario)
    (out / "run.log").write_text("\n".join(lines) + "\n")
    if result.sdl is not None:
        with open(out / "sdl_snapshot.json", "w") as fh:
            json.dump(result.sdl.snapshot(), fh, indent=2, sort_keys=True)


def load_rows(metrics_dir: str | Path) -> tuple[list[dict], list[dict], dict]:
    """Read frames.csv, audit.jsonl, and meta.json back from a run directory."""
    out = Path(metrics_dir)
    rows = []
    with open(out / "frames.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "frame_index": int(rec["frame_index"]),
                    "ue": int(rec["ue"]),
                    "served_bits": int(rec["served_bits"]),
                    "queue_bytes": int(rec["queue_bytes"]),
                    "latency_ms": float(rec["latency_ms"]) if rec["latency_ms"] else None,
                    "auth_state": rec["auth_state"],
                    "slice_id": int(rec["slice_id"]) if rec["slice_id"] else None,
                }
            )
    audit_entries = []
    audit_path = out / "audit.jsonl"
    if audit_path.exists():
        with open(audit_path) as fh:
            audit_entries = [json.loads(line) for line in fh if line.strip()]
    with open(out / "meta.json") as fh:
        meta = json.load(fh)
    return rows, audit_entries, meta


def summarize_dir(metrics_dir: str | Path, latency_threshold_ms: int | None = None) -> RunSummary:
    rows, audit_entries, meta = load_rows(metrics_dir)
    threshold = (
        latency_threshold_ms if latency_threshold_ms is not None else meta["latency_threshold_ms"]
    )
    summary = summarize_rows(rows, audit_entries, meta, threshold)
    fpr_csvs = sorted(Path(metrics_dir).glob("fpr*.csv"))
    if fpr_csvs:
        summary.fpr_curve = fpr_csvs[0].name
    with open(Path(metrics_dir) / "summary.json", "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
    return summary


def fpr_sweep(
    sc: Scenario,
    windows: list[int],
    trials: int,
    seed: int | None = None,
    out_csv: str | Path | None = None,
) -> list[FprEstimate]:
    """Estimate the false-positive rate per report-window size and emit CSV."""
    if trials < 10_000:
        raise ValueError("fpr sweep needs trials >= 10000")
    eff_seed = sc.seed if seed is None else seed
    spec = next((u for u in sc.ues if u.legitimate), sc.ues[0])
    model = _profile_model(spec, sc.report_period_ms)
    rng = Random(f"{eff_seed}/ue{spec.ue}/warmup")
    profile = build_profile(spec.ue, warmup_history(model, sc.detection, rng), sc.detection)
    estimates = [
        estimate_fpr(
            profile,
            window_n=w,
            trials=trials,
            seed=eff_seed,
            config=sc.detection,
            throughput_range=sc.fpr_benign_range,
        )
        for w in windows
    ]
    if out_csv is not None:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        write_fpr_csv(estimates, str(out_csv))
    return estimates
