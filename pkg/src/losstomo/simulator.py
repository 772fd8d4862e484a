"""Bernoulli loss simulation of multicast probes.

Each probe crosses each link independently with the link's pass rate.
Random draws come from one PCG64 stream per (source, link) pair, seeded
from ``SeedSequence(seed, spawn_key=(crc32(source), crc32(link)))``.
Adding or removing a link therefore never changes the draws of another
link, and probe order does not matter.
"""

from __future__ import annotations

import zlib
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .topology import GeneralTopology, LinkParams, MulticastTree, node_sort_key

__all__ = [
    "ObservationMatrix",
    "format_observations",
    "link_stream",
    "load_observations",
    "parse_observations",
    "save_observations",
    "simulate_general",
    "simulate_tree",
]


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """Per-probe, per-receiver reception outcomes.

    ``data[i, j]`` is True iff probe ``i`` reached receiver
    ``receivers[j]``.  Probes are grouped into contiguous per-source
    blocks ``(source, start, stop)`` ordered by source id.
    """

    receivers: tuple[str, ...]
    data: np.ndarray
    blocks: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        if data.ndim != 2 or data.shape[1] != len(self.receivers):
            raise ValueError(
                f"data of shape {data.shape} does not match {len(self.receivers)} receivers"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        expected = 0
        for _, start, stop in self.blocks:
            if start != expected or stop < start:
                raise ValueError("source blocks must be contiguous and ordered")
            expected = stop
        if expected != data.shape[0]:
            raise ValueError("source blocks do not cover every probe")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationMatrix):
            return NotImplemented
        return (
            self.receivers == other.receivers
            and self.blocks == other.blocks
            and np.array_equal(self.data, other.data)
        )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(b[0] for b in self.blocks)

    def n_per_source(self) -> dict[str, int]:
        return {s: stop - start for s, start, stop in self.blocks}

    def rows_for(self, source: str) -> slice:
        for s, start, stop in self.blocks:
            if s == source:
                return slice(start, stop)
        raise KeyError(f"no probes from source {source!r}")

    def columns(self, receivers) -> np.ndarray:
        index = {r: i for i, r in enumerate(self.receivers)}
        try:
            cols = [index[r] for r in receivers]
        except KeyError as exc:
            raise KeyError(f"receiver {exc.args[0]!r} not in observation matrix") from None
        return self.data[:, cols]

    def source_labels(self) -> np.ndarray:
        labels = np.empty(self.n, dtype=object)
        for s, start, stop in self.blocks:
            labels[start:stop] = s
        return labels


def _crc(token: str) -> int:
    return zlib.crc32(token.encode("utf-8"))


def link_stream(seed: int, source: str, link: str) -> np.random.Generator:
    """The independent random stream used for ``link`` under ``source``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_crc(source), _crc(link)))
    return np.random.Generator(np.random.PCG64(ss))


def _simulate_block(topology, source, link_of, rates, receivers, n, seed) -> np.ndarray:
    reach = {source: np.ones(n, dtype=bool)}
    order = [source]
    for v in order:
        for c in topology.children(v):
            link = link_of(v, c)
            passed = link_stream(seed, source, link).random(n) < rates[link]
            reach[c] = reach[v] & passed
            order.append(c)
    block = np.zeros((n, len(receivers)), dtype=bool)
    for j, r in enumerate(receivers):
        if r in reach:
            block[:, j] = reach[r]
    return block


def simulate_tree(tree: MulticastTree, params: LinkParams, n: int, seed: int) -> ObservationMatrix:
    """Simulate ``n`` probes multicast from the root of ``tree``.

    ``params`` is keyed by child node id (the tree's link ids).
    """
    if n < 0:
        raise ValueError("probe count must be non-negative")
    rates = {tree.link_ids.get(c, c): params[c] for c in tree.links}
    block = _simulate_block(
        tree, tree.root, lambda p, c: tree.link_ids.get(c, c), rates, tree.receivers, n, seed
    )
    return ObservationMatrix(tree.receivers, block, ((tree.root, 0, n),))


def simulate_general(
    topology: GeneralTopology,
    params: LinkParams,
    n_per_source: Mapping[str, int] | int,
    seed: int,
) -> ObservationMatrix:
    """Simulate probes from every source of a general topology.

    ``params`` is keyed by link id.  ``n_per_source`` gives each source's
    probe count, or one count shared by all sources.
    """
    if isinstance(n_per_source, int):
        counts = {s: n_per_source for s in topology.sources}
    else:
        counts = dict(n_per_source)
        unknown = set(counts) - set(topology.sources)
        if unknown:
            raise ValueError(f"sources {sorted(unknown)} are not in the topology")
        missing = set(topology.sources) - set(counts)
        if missing:
            raise ValueError(f"no probe count for sources {sorted(missing)}")
    for s, count in counts.items():
        if count < 1:
            raise ValueError(f"source {s} must send at least one probe")

    def link_of(p, c):
        return topology.link_between[(p, c)]

    blocks, parts, start = [], [], 0
    for s in topology.sources:
        n = counts[s]
        parts.append(_simulate_block(topology, s, link_of, params, topology.receivers, n, seed))
        blocks.append((s, start, start + n))
        start += n
    data = np.vstack(parts) if parts else np.zeros((0, len(topology.receivers)), dtype=bool)
    return ObservationMatrix(topology.receivers, data, tuple(blocks))


def format_observations(obs: ObservationMatrix) -> str:
    lines = [f"obs {obs.n} {len(obs.receivers)}", "# receivers " + " ".join(obs.receivers)]
    bits = (obs.data.astype(np.uint8) + ord("0")).view("S1") if obs.n else None
    labels = obs.source_labels()
    for i in range(obs.n):
        lines.append(f"{i} {labels[i]} {bits[i].tobytes().decode('ascii')}")
    return "\n".join(lines) + "\n"


def parse_observations(text: str, receivers=None) -> ObservationMatrix:
    """Parse the observation text format.

    Receiver ids come from the ``# receivers`` line when present, else
    from ``receivers`` (sorted by node id).
    """
    lines = text.splitlines()
    rows, labels = [], []
    header = None
    declared = None
    last_id = -1
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tokens = line[1:].split()
            if tokens and tokens[0] == "receivers":
                declared = tuple(tokens[1:])
            continue
        tokens = line.split()
        if header is None:
            if len(tokens) != 3 or tokens[0] != "obs":
                raise FormatError(f"line {lineno}: expected 'obs <n_probes> <n_receivers>'")
            try:
                header = (int(tokens[1]), int(tokens[2]))
            except ValueError:
                raise FormatError(f"line {lineno}: non-integer header") from None
            continue
        if len(tokens) != 3:
            raise FormatError(f"line {lineno}: expected '<probe_id> <source_id> <bits>'")
        try:
            probe_id = int(tokens[0])
        except ValueError:
            raise FormatError(f"line {lineno}: bad probe id {tokens[0]!r}") from None
        if probe_id <= last_id:
            raise FormatError(f"line {lineno}: probe ids must be strictly increasing")
        last_id = probe_id
        bits = tokens[2]
        if header and len(bits) != header[1] or set(bits) - {"0", "1"}:
            raise FormatError(f"line {lineno}: bitstring {bits!r} does not match header")
        labels.append(tokens[1])
        rows.append(bits)
    if header is None:
        raise FormatError("missing 'obs' header")
    n_probes, n_receivers = header
    if len(rows) != n_probes:
        raise FormatError(f"header announces {n_probes} probes, found {len(rows)}")
    if declared is None:
        if receivers is None:
            raise FormatError("receiver ids are neither declared in the file nor supplied")
        declared = tuple(sorted(receivers, key=node_sort_key))
    elif receivers is not None and set(declared) != set(receivers):
        raise FormatError("declared receivers do not match the topology")
    if len(declared) != n_receivers:
        raise FormatError(f"header announces {n_receivers} receivers, found {len(declared)}")
    if rows:
        raw = np.frombuffer("".join(rows).encode("ascii"), dtype=np.uint8)
        data = (raw - ord("0")).reshape(n_probes, n_receivers).astype(bool)
    else:
        data = np.zeros((0, n_receivers), dtype=bool)
    blocks, start = [], 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            blocks.append((labels[start], start, i))
            start = i
    names = [b[0] for b in blocks]
    if len(set(names)) != len(names):
        raise FormatError("probes of one source are not contiguous")
    if names != sorted(names, key=node_sort_key):
        raise FormatError("source blocks are not ordered by source id")
    return ObservationMatrix(declared, data, tuple(blocks))


def load_observations(path, receivers=None) -> ObservationMatrix:
    return parse_observations(Path(path).read_text(), receivers)


def save_observations(obs: ObservationMatrix, path) -> None:
    Path(path).write_text(format_observations(obs))
