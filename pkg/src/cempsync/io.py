"""File formats: instance JSON, meta sidecar, trace and estimate CSVs.

Floats are written with ``repr`` (shortest round-trip form), so reading a
file back reproduces every ratio bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import MeasurementGraph, bad_mask_from_pairs
from .groups import Group, Perm, make_group
from .synth import SyntheticInstance, corruption_levels

__all__ = [
    "InstanceFile", "instance_to_dict", "instance_from_dict", "write_instance", "read_instance",
    "meta_path", "write_json", "read_json", "write_trace", "read_trace", "write_estimates",
    "TRACE_COLUMNS", "ESTIMATE_COLUMNS",
]

TRACE_COLUMNS = ("t", "beta_t", "eps_max", "eps_mean", "stalled_count")
ESTIMATE_COLUMNS = ("i", "j", "s_hat", "s_star", "label")


@dataclass(frozen=True, eq=False)
class InstanceFile:
    graph: MeasurementGraph
    truth: np.ndarray | None = None
    bad: np.ndarray | None = None

    @property
    def group(self) -> Group:
        return self.graph.group

    def to_synthetic(self, meta: dict | None = None) -> SyntheticInstance:
        if self.truth is None:
            raise ValueError("instance has no ground truth")
        s_star = corruption_levels(self.graph, self.truth)
        bad = self.bad if self.bad is not None else s_star > 0
        meta = dict(meta or {})
        noise = meta.pop("noise", None) or {"kind": "none"}
        return SyntheticInstance(self.graph, self.truth, bad, s_star, noise=noise, meta=meta)


def _group_header(g: Group) -> dict:
    out = {"group": g.tag}
    if isinstance(g, Perm):
        out["N"] = g.N
    return out


def instance_to_dict(graph: MeasurementGraph, truth=None, bad=None) -> dict:
    g = graph.group
    d = _group_header(g)
    d["n"] = int(graph.n)
    d["edges"] = [{"i": int(i), "j": int(j), "ratio": g.encode(r)}
                  for (i, j), r in zip(graph.edges, graph.ratios)]
    if truth is not None:
        bad = np.zeros(graph.m, dtype=bool) if bad is None else np.asarray(bad, dtype=bool)
        d["truth"] = {"elements": [g.encode(x) for x in truth],
                      "bad_edges": graph.edges[bad].tolist()}
    return d


def instance_from_dict(d: dict) -> InstanceFile:
    for key in ("group", "n", "edges"):
        if key not in d:
            raise ValueError(f"instance is missing {key!r}")
    g = make_group(d["group"], d.get("N"))
    n = int(d["n"])
    edges = np.array([[e["i"], e["j"]] for e in d["edges"]], dtype=np.int64).reshape(-1, 2)
    raw = [e["ratio"] for e in d["edges"]]
    if raw:
        ratios = g.decode(raw)
    else:
        ratios = np.zeros((0,) + tuple(getattr(g, "elem_shape", ())), dtype=g.dtype)
    graph = MeasurementGraph(n, edges, ratios, g)
    truth = bad = None
    if "truth" in d and d["truth"] is not None:
        truth = g.decode(d["truth"]["elements"])
        if len(truth) != n:
            raise ValueError(f"truth has {len(truth)} elements for {n} nodes")
        bad = bad_mask_from_pairs(n, edges, d["truth"].get("bad_edges", []))
    return InstanceFile(graph, truth, bad)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=False, allow_nan=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def meta_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def write_instance(path, inst: SyntheticInstance | MeasurementGraph, meta: bool = True) -> None:
    """Instance JSON, plus the meta sidecar next to it for synthetic instances."""
    if isinstance(inst, MeasurementGraph):
        write_json(path, instance_to_dict(inst))
        return
    write_json(path, instance_to_dict(inst.graph, inst.truth, inst.bad))
    if meta:
        write_json(meta_path(path), inst.sidecar())


def read_instance(path) -> tuple[InstanceFile, dict | None]:
    inst = instance_from_dict(read_json(path))
    mp = meta_path(path)
    return inst, (read_json(mp) if mp.exists() else None)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([_fmt(row.t), _fmt(row.beta_t), _fmt(row.eps_max), _fmt(row.eps_mean),
                        _fmt(row.stalled_count)])


def read_trace(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({k: (None if v == "" else (int(v) if k in ("t", "stalled_count") else float(v)))
                        for k, v in row.items()})
    return out


def write_estimates(path, edges, s_hat, s_star=None, bad=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_COLUMNS)
        for e, (i, j) in enumerate(np.asarray(edges)):
            label = "" if bad is None else ("bad" if bad[e] else "good")
            w.writerow([int(i), int(j), _fmt(s_hat[e]),
                        "" if s_star is None else _fmt(s_star[e]), label])
