"""
Bernoulli link-loss probing.

Every probe makes one independent pass/fail draw on every link of its
source's tree, so probes of different sources crossing a shared link never
share a draw.  Random streams are derived from ``(seed, source, block)``
through :class:`numpy.random.SeedSequence`, which makes the output
independent of the order in which blocks are generated.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .topology import Topology

BLOCK = 1024


class LossModel(dict):
    """Loss probability per link id; every value must lie in [0, 1)."""

    def __init__(self, theta: Mapping[int, float], topology: Topology | None = None):
        super().__init__({int(k): float(v) for k, v in theta.items()})
        for k, v in self.items():
            if not 0.0 <= v < 1.0:
                raise ValueError(f"loss rate of link {k} is {v}, outside [0, 1)")
        if topology is not None:
            missing = sorted({l.id for l in topology.links} - set(self))
            extra = sorted(set(self) - {l.id for l in topology.links})
            if missing or extra:
                raise ValueError(f"loss model mismatch: missing {missing}, unknown {extra}")

    @classmethod
    def uniform(cls, topology: Topology, theta: float, overrides=None) -> "LossModel":
        d = {l.id: theta for l in topology.links}
        d.update({int(k): v for k, v in (overrides or {}).items()})
        return cls(d, topology)

    @classmethod
    def from_spec(cls, topology: Topology, spec) -> "LossModel":
        """Accept ``{"default": x, "links": {id: x}}`` or a plain ``{id: x}`` map."""
        if isinstance(spec, (int, float)):
            return cls.uniform(topology, float(spec))
        if "default" in spec or "links" in spec:
            return cls.uniform(topology, spec.get("default", 0.0), spec.get("links"))
        return cls(spec, topology)


@dataclass
class ObservationSet:
    """Receiver bitmaps per source: ``bits[s][o, r]`` is X_r^s(o).

    ``truth`` optionally holds the simulator's per-link record for each
    source as a pair of boolean arrays ``(attempted, passed)`` of shape
    ``(n^s, len(links[s]))``; a link is attempted when the probe reached its
    parent node.
    """
    topology_hash: str
    seed: int | None
    receivers: dict[int, tuple[int, ...]]
    bits: dict[int, np.ndarray]
    links: dict[int, tuple[int, ...]] = field(default_factory=dict)
    truth: dict[int, tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        for s, b in self.bits.items():
            if b.ndim != 2 or b.shape[1] != len(self.receivers[s]):
                raise ValueError(f"bitmap of source {s} has shape {b.shape}, expected "
                                 f"(n, {len(self.receivers[s])})")
            b.setflags(write=False)

    @property
    def counts(self) -> dict[int, int]:
        return {s: int(b.shape[0]) for s, b in self.bits.items()}

    def window(self, start: int, stop: int) -> "ObservationSet":
        """Probes ``start:stop`` of every source."""
        truth = None
        if self.truth is not None:
            truth = {s: (a[start:stop], p[start:stop]) for s, (a, p) in self.truth.items()}
        return ObservationSet(self.topology_hash, self.seed, dict(self.receivers),
                              {s: b[start:stop].copy() for s, b in self.bits.items()},
                              dict(self.links), truth)

    def tally(self) -> dict[int, tuple[int, int]]:
        """Ground-truth ``(losses, passes)`` per link, summed over sources."""
        if self.truth is None:
            raise ValueError("observation set carries no ground truth")
        acc: dict[int, list[int]] = {}
        for s, (att, ok) in self.truth.items():
            losses = (att & ~ok).sum(axis=0)
            passes = (att & ok).sum(axis=0)
            for j, k in enumerate(self.links[s]):
                cur = acc.setdefault(k, [0, 0])
                cur[0] += int(losses[j])
                cur[1] += int(passes[j])
        return {k: (v[0], v[1]) for k, v in sorted(acc.items())}

    def actual_loss_rates(self) -> dict[int, float]:
        """Ground-truth loss fraction per link (nan when no probe attempted it)."""
        out = {}
        for k, (lost, passed) in self.tally().items():
            tot = lost + passed
            out[k] = lost / tot if tot else float("nan")
        return out

    def equals(self, other: "ObservationSet") -> bool:
        return (self.topology_hash == other.topology_hash and self.receivers == other.receivers
                and self.bits.keys() == other.bits.keys()
                and all(np.array_equal(self.bits[s], other.bits[s]) for s in self.bits))

    # ---------------------------------------------------------------- trace files
    def header(self) -> dict:
        return {
            "topology_hash": self.topology_hash,
            "seed": self.seed,
            "counts": {str(s): n for s, n in sorted(self.counts.items())},
            "receivers": {str(s): list(r) for s, r in sorted(self.receivers.items())},
        }

    def save(self, path):
        """Binary trace: JSON header plus one bit-packed array per source (npz)."""
        arrays = {f"bits_{s}": np.packbits(b, axis=0) for s, b in sorted(self.bits.items())}
        with open(path, "wb") as fh:
            np.savez(fh, header=np.frombuffer(json.dumps(self.header(), sort_keys=True)
                                              .encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path) -> "ObservationSet":
        with np.load(path) as z:
            header = json.loads(bytes(z["header"]).decode())
            bits = {}
            for s, n in header["counts"].items():
                packed = z[f"bits_{s}"]
                bits[int(s)] = np.unpackbits(packed, axis=0, count=n).astype(bool)
        return cls(header["topology_hash"], header["seed"],
                   {int(s): tuple(r) for s, r in header["receivers"].items()}, bits)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "probe", "receiver", "bit"])
        for s in sorted(self.bits):
            b = self.bits[s]
            for o in range(b.shape[0]):
                for j, r in enumerate(self.receivers[s]):
                    w.writerow([s, o, r, int(b[o, j])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, topology: Topology) -> "ObservationSet":
        rows = list(csv.DictReader(io.StringIO(text)))
        recv = {s: topology.receivers[s] for s in topology.receivers}
        n = {}
        for row in rows:
            s = int(row["source"])
            n[s] = max(n.get(s, 0), int(row["probe"]) + 1)
        bits = {s: np.zeros((n.get(s, 0), len(recv[s])), dtype=bool) for s in recv}
        col = {s: {r: j for j, r in enumerate(recv[s])} for s in recv}
        for row in rows:
            s = int(row["source"])
            bits[s][int(row["probe"]), col[s][int(row["receiver"])]] = row["bit"] == "1"
        return cls(topology.digest(), None, recv, bits)


def tally_csv(obs: ObservationSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["link", "losses", "passes"])
    for k, (lost, passed) in obs.tally().items():
        w.writerow([k, lost, passed])
    return buf.getvalue()


def _stream(seed: int, source: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(source, block)))


def simulate(topology: Topology, loss: Mapping[int, float], counts, seed: int,
             keep_truth: bool = True) -> ObservationSet:
    """Send ``counts[s]`` probes from every source and record receiver bitmaps.

    ``counts`` is an int (same for every source) or a mapping source -> int.
    """
    topology.check()
    loss = loss if isinstance(loss, LossModel) else LossModel(loss, topology)
    if isinstance(counts, (int, np.integer)):
        counts = {s.id: int(counts) for s in topology.sources}
    bits, truth, links_of = {}, {}, {}
    for src in topology.sources:
        s = src.id
        n = int(counts.get(s, 0))
        if n < 0:
            raise ValueError(f"negative probe count for source {s}")
        links = sorted(topology.source_links[s], key=lambda l: l.id)
        col = {l.id: j for j, l in enumerate(links)}
        keep = np.array([1.0 - loss[l.id] for l in links])
        order = [topology.parent_link[s][v] for v in topology.tree_nodes[s][1:]]
        recv = topology.receivers[s]
        att = np.zeros((n, len(links)), dtype=bool)
        ok = np.zeros((n, len(links)), dtype=bool)
        for b0 in range(0, n, BLOCK):
            m = min(BLOCK, n - b0)
            u = _stream(seed, s, b0 // BLOCK).random((m, len(links)))
            ok[b0:b0 + m] = u < keep
        reach = {src.root: np.ones(n, dtype=bool)}
        for l in order:
            j = col[l.id]
            att[:, j] = reach[l.parent]
            reach[l.child] = reach[l.parent] & ok[:, j]
        bits[s] = np.column_stack([reach[r] for r in recv]) if recv else np.zeros((n, 0), bool)
        truth[s] = (att, ok)
        links_of[s] = tuple(l.id for l in links)
    return ObservationSet(topology.digest(), seed, dict(topology.receivers), bits,
                          links_of, truth if keep_truth else None)


def shared_link_draw_policy(topology: Topology, loss: Mapping[int, float], seed: int,
                            source: int, probe: int, link: int) -> bool:
    """Pass/fail outcome of ``link`` for one probe, exactly as :func:`simulate` draws it.

    Draws are keyed by (seed, source, probe, link): a shared link gives each
    source's probe its own coin flip.
    """
    links = sorted(l.id for l in topology.source_links[source])
    if link not in links:
        raise ValueError(f"link {link} is not in the tree of source {source}")
    block, row = divmod(probe, BLOCK)
    u = _stream(seed, source, block).random((row + 1, len(links)))[row, links.index(link)]
    return bool(u < 1.0 - loss[link])
