#!/usr/bin/env python3
"""Run the two headline experiments and print a compact comparison.

Writes full metric logs under out/:
  out/flood_isolation/        detection + reallocation run
  out/latency_flood-legacy/   shared-FIFO cell, no security xApps
  out/latency_flood/          same seed with the xApps active
"""
from pathlib import Path

from ztcell import load_scenario, run

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    sc = load_scenario(ROOT / "scenarios" / "flood_isolation.scn")
    res = run(sc, out_dir=ROOT / "out" / "flood_isolation")
    s = res.summary
    print("== flood isolation ==")
    print(f"detection at frame {s.detection_frame}, isolation at frame {s.isolation_frame}")
    for ue, info in s.per_ue.items():
        pre, post = info["pre_detection_mbps"], info["post_isolation_mbps"]
        print(f"  UE{ue}: pre {pre:.2f} Mbps -> post {post:.2f} Mbps"
              f" ({'legit' if info['legitimate'] else 'suspect'})")

    sc = load_scenario(ROOT / "scenarios" / "latency_flood.scn")
    legacy = run(sc, out_dir=ROOT / "out" / "latency_flood-legacy", legacy=True)
    zt = run(sc, out_dir=ROOT / "out" / "latency_flood")
    print("== latency under flood ==")
    print(f"  legacy:     exceedance {legacy.summary.latency_exceedance:.3f},"
          f" peak {legacy.summary.peak_latency_ms:.0f} ms")
    print(f"  zero-trust: exceedance {zt.summary.latency_exceedance:.3f},"
          f" peak {zt.summary.peak_latency_ms:.0f} ms"
          f" (isolation at frame {zt.summary.isolation_frame})")


if __name__ == "__main__":
    main()
