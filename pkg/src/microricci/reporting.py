"""Run artifacts: JSON payloads with the resolved configuration embedded,
trace CSV export, corpus tables, and the timing-excluded checksum used by the
determinism checks."""
from __future__ import annotations

import csv
import hashlib
import json

__all__ = [
    "LIBRARY_VERSION",
    "run_payload",
    "write_json",
    "checksum_excluding_timing",
    "write_trace_csv",
    "write_corpus_table",
]

LIBRARY_VERSION = "0.1.0"


def run_payload(kind, config, report, verification=None, extra=None):
    """Standard artifact layout. Everything non-deterministic lives under the
    ``timing`` key so checksums can exclude it."""
    payload = {
        "kind": kind,
        "library_version": LIBRARY_VERSION,
        "config": config,
        "result": report.to_result_dict(),
        "timing": report.to_timing_dict(),
    }
    if verification is not None:
        payload["verification"] = verification
    if extra:
        payload.update(extra)
    return payload


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def checksum_excluding_timing(source):
    """sha256 over the canonical JSON with every ``timing`` subtree removed.
    ``source`` is a payload dict or a path to a JSON artifact."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    else:
        payload = source

    def strip(node):
        if isinstance(node, dict):
            return {k: strip(v) for k, v in node.items() if k != "timing"}
        if isinstance(node, list):
            return [strip(v) for v in node]
        return node

    canon = json.dumps(strip(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_trace_csv(path, report):
    """Per-iteration trace: residual, optional energy, stage times in ms."""
    trace = report.residual_trace
    stages = report.stage_times
    energy = {}
    if report.energy_trace is not None and report.energy_every:
        for k, e in enumerate(report.energy_trace):
            energy[k * report.energy_every] = e
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "resid_inf", "energy", "ms_matvec", "ms_select",
                    "ms_regress", "ms_update"])
        for t in range(len(trace)):
            row = [t, f"{trace[t]:.17g}",
                   f"{energy[t]:.17g}" if t in energy else ""]
            for key in ("matvec", "select", "step_predict", "update"):
                arr = stages.get(key)
                ns = int(arr[t]) if arr is not None and t < len(arr) else 0
                row.append(f"{ns / 1e6:.6f}")
            w.writerow(row)


def write_corpus_table(path, rows):
    """Method-comparison table; ``rows`` maps method name to the 4-tuple from
    :func:`microricci.metrics.corpus_stats`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "iter_mean", "iter_std", "ms_per_iter", "total_s"])
        for method, (im, istd, ms, tot) in rows.items():
            w.writerow([method, f"{im:.3f}", f"{istd:.3f}", f"{ms:.6f}",
                        f"{tot:.6f}"])
