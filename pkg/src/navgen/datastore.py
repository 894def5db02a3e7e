"""Episodes, shard files, seen/unseen splits and dataset statistics.

Shard layout (UTF-8, ``\\n`` line endings)::

    navgen-shard <version> <sha256(header line)> <sha256(body)>
    {"config_digest": ..., "count": N, "format_version": 1, "scene_ids": [...], "seed": S, "split": ...}
    <N episode records, one JSON object per line, fixed key order>

Readers verify the version, the header digest, the record count and the body
digest before returning anything.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .instructgen import InstructionRecord
from .rng import make_rng
from .trajsample import Trajectory, TrajectoryStyle

SHARD_FORMAT = "navgen-shard"
SHARD_VERSION = 1

# reference row for dataset reports: R2R's published size and path shape
R2R_CALIBRATION = {"instructions": 22_000, "words_per_instruction": 32, "nodes_per_path": 7, "path_length_m": 10.0}


class Split(str, Enum):
    TRAIN = "TRAIN"
    VAL_SEEN = "VAL_SEEN"
    VAL_UNSEEN = "VAL_UNSEEN"


class ShardError(Exception):
    """Unreadable shard. ``code`` is VERSION_MISMATCH, DIGEST_MISMATCH or TRUNCATED."""

    def __init__(self, code: str, offset: int, detail: str = ""):
        super().__init__(f"{code} at byte {offset}" + (f": {detail}" if detail else ""))
        self.code = code
        self.offset = offset


@dataclass(frozen=True)
class Episode:
    episode_id: str
    trajectory: Trajectory
    instruction: InstructionRecord | None
    split: Split
    seed: int


def episode_id(trajectory: Trajectory, speaker_tag: str | None, seed: int) -> str:
    """64-bit BLAKE2b over the canonical field text, as 16 hex digits."""
    key = "|".join(
        [
            trajectory.scene_id,
            ",".join(map(str, trajectory.node_ids)),
            speaker_tag or "",
            str(seed),
            trajectory.style.value,
            "" if trajectory.target_object is None else str(trajectory.target_object),
        ]
    )
    return hashlib.blake2b(key.encode("utf-8"), digest_size=8).hexdigest()


def make_episode(trajectory, instruction, seed, split=Split.TRAIN) -> Episode:
    tag = instruction.speaker_tag if instruction is not None else None
    return Episode(episode_id(trajectory, tag, seed), trajectory, instruction, Split(split), seed)


def episode_fraction(eid: str) -> float:
    """Uniform value in [0, 1) derived from an episode id."""
    return int(eid, 16) / 2.0**64


# ---------------------------------------------------------------- records


def dumps_episode(ep: Episode) -> str:
    t = ep.trajectory
    rec = {
        "episode_id": ep.episode_id,
        "scene_id": t.scene_id,
        "split": ep.split.value,
        "style": t.style.value,
        "node_ids": list(t.node_ids),
        "length": t.length,
        "target_object": t.target_object,
        "instruction": ep.instruction.text if ep.instruction else None,
        "speaker": ep.instruction.speaker_tag if ep.instruction else None,
        "seed": ep.seed,
    }
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False)


def loads_episode(line: str) -> Episode:
    rec = json.loads(line)
    nodes = tuple(rec["node_ids"])
    traj = Trajectory(rec["scene_id"], nodes, rec["length"], TrajectoryStyle(rec["style"]), rec["target_object"])
    instr = None
    if rec["instruction"] is not None:
        instr = InstructionRecord(tuple(rec["instruction"].split()), rec["speaker"], rec["scene_id"], nodes)
    return Episode(rec["episode_id"], traj, instr, Split(rec["split"]), rec["seed"])


# ---------------------------------------------------------------- shards


@dataclass(frozen=True)
class DatasetShard:
    path: Path
    config_digest: str
    seed: int
    scene_ids: tuple[str, ...]
    count: int
    split: str | None
    episodes: tuple[Episode, ...] = ()


class ShardWriter:
    """Streams records into a shard; the file appears only on :meth:`close`."""

    def __init__(self, path, config_digest: str, seed: int, split: str | None = None):
        self.path = Path(path)
        self.config_digest = config_digest
        self.seed = seed
        self.split = split
        self.count = 0
        self.scene_ids: set[str] = set()
        self._hash = hashlib.sha256()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".body-", dir=self.path.parent)
        self._tmp = Path(tmp)
        self._body = os.fdopen(fd, "wb")

    def write(self, ep: Episode) -> None:
        self.write_line(dumps_episode(ep), ep.trajectory.scene_id)

    def write_line(self, line: str, scene_id: str) -> None:
        data = line.encode("utf-8") + b"\n"
        self._hash.update(data)
        self._body.write(data)
        self.count += 1
        self.scene_ids.add(scene_id)

    def header(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "count": self.count,
            "format_version": SHARD_VERSION,
            "scene_ids": sorted(self.scene_ids),
            "seed": self.seed,
            "split": self.split,
        }

    def close(self) -> DatasetShard:
        self._body.close()
        head = json.dumps(self.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        tag = f"{SHARD_FORMAT} {SHARD_VERSION} {hashlib.sha256(head).hexdigest()} {self._hash.hexdigest()}\n"
        with open(self.path, "wb") as out, open(self._tmp, "rb") as body:
            out.write(tag.encode("ascii"))
            out.write(head + b"\n")
            while chunk := body.read(1 << 20):
                out.write(chunk)
        self._tmp.unlink()
        h = self.header()
        return DatasetShard(self.path, self.config_digest, self.seed, tuple(h["scene_ids"]), self.count, self.split)

    def abort(self) -> None:
        self._body.close()
        self._tmp.unlink(missing_ok=True)


def write_shard(episodes: Iterable[Episode], config, path, split: str | None = None) -> DatasetShard:
    digest = config.digest if hasattr(config, "digest") else str(config)
    seed = getattr(config, "seed", 0)
    w = ShardWriter(path, digest, seed, split)
    try:
        for ep in episodes:
            w.write(ep)
    except BaseException:
        w.abort()
        raise
    return w.close()


def _shard_from_header(path, head, episodes=()):
    return DatasetShard(
        Path(path), head["config_digest"], head["seed"], tuple(head["scene_ids"]),
        head["count"], head.get("split"), tuple(episodes),
    )


def _validate(data: bytes):
    nl = data.find(b"\n")
    if nl < 0:
        raise ShardError("TRUNCATED", len(data), "missing tag line")
    tag = data[:nl].decode("ascii", "replace").split()
    if len(tag) != 4 or tag[0] != SHARD_FORMAT:
        raise ShardError("VERSION_MISMATCH", 0, "not a navgen shard")
    if tag[1] != str(SHARD_VERSION):
        raise ShardError("VERSION_MISMATCH", 0, f"version {tag[1]!r}, expected {SHARD_VERSION}")
    h_start = nl + 1
    h_end = data.find(b"\n", h_start)
    if h_end < 0:
        raise ShardError("TRUNCATED", len(data), "missing header line")
    if hashlib.sha256(data[h_start:h_end]).hexdigest() != tag[2]:
        raise ShardError("DIGEST_MISMATCH", h_start, "header digest")
    head = json.loads(data[h_start:h_end])
    if head.get("format_version") != SHARD_VERSION:
        raise ShardError("VERSION_MISMATCH", h_start, "header format_version")
    b_start = h_end + 1
    body = data[b_start:]
    lines = body.split(b"\n")
    complete = len(lines) - 1  # trailing element after the final newline
    if complete < head["count"]:
        last_good = b_start + (body.rfind(b"\n") + 1 if complete else 0)
        raise ShardError("TRUNCATED", last_good, f"{complete} of {head['count']} records")
    if hashlib.sha256(body).hexdigest() != tag[3] or complete != head["count"] or lines[-1]:
        raise ShardError("DIGEST_MISMATCH", b_start, "body digest")
    return head, b_start, lines[:-1]


def load_shard(path, expected_config_digest: str | None = None) -> DatasetShard:
    data = Path(path).read_bytes()
    head, _, lines = _validate(data)
    if expected_config_digest is not None and head["config_digest"] != expected_config_digest:
        raise ShardError("DIGEST_MISMATCH", 0, "config digest differs from the expected config")
    episodes = [loads_episode(line.decode("utf-8")) for line in lines]
    return _shard_from_header(path, head, episodes)


def read_shard(path, expected_config_digest: str | None = None) -> list[Episode]:
    return list(load_shard(path, expected_config_digest).episodes)


# ---------------------------------------------------------------- splits


def split_scenes(scene_ids: Sequence[str], ratio_unseen: float, seed: int) -> tuple[list[str], list[str]]:
    """Scene-disjoint ``(seen, unseen)`` partition, each sorted."""
    ids = sorted(set(scene_ids))
    if len(ids) < 2:
        raise ValueError("an unseen split needs at least 2 scenes")
    if not 0 < ratio_unseen < 1:
        raise ValueError("ratio_unseen must lie in (0, 1)")
    n_unseen = min(len(ids) - 1, max(1, int(round(ratio_unseen * len(ids)))))
    order = make_rng(seed, "scene-split").permutation(len(ids))
    unseen = sorted(ids[i] for i in order[:n_unseen])
    seen = sorted(set(ids) - set(unseen))
    return seen, unseen


def assign_split(eid: str, scene_unseen: bool, val_seen_ratio: float) -> Split:
    if scene_unseen:
        return Split.VAL_UNSEEN
    return Split.VAL_SEEN if episode_fraction(eid) < val_seen_ratio else Split.TRAIN


class EpisodeBuffer:
    """Fixed-capacity staging buffer; flushes to ``sink`` when full and records peak occupancy."""

    def __init__(self, window: int, sink):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.sink = sink
        self.items: list = []
        self.peak = 0
        self.total = 0

    def add(self, item) -> None:
        self.items.append(item)
        self.total += 1
        self.peak = max(self.peak, len(self.items))
        if len(self.items) >= self.window:
            self.flush()

    def flush(self) -> None:
        if self.items:
            self.sink(self.items)
            self.items = []


# ---------------------------------------------------------------- statistics


def dataset_stats(shards: Sequence, manifest: dict | None = None) -> dict:
    """Counts, histograms and per-scene yields over a set of shards (paths or loaded shards)."""
    by_style: Counter = Counter()
    by_split: Counter = Counter()
    by_style_split: Counter = Counter()
    nodes_hist: Counter = Counter()
    per_scene: dict = defaultdict(Counter)
    lengths = []
    words = []
    for sh in shards:
        if not isinstance(sh, DatasetShard):
            sh = load_shard(sh)
        elif sh.count and not sh.episodes:
            sh = load_shard(sh.path)
        for ep in sh.episodes:
            t = ep.trajectory
            by_style[t.style.value] += 1
            by_split[ep.split.value] += 1
            by_style_split[f"{t.style.value}/{ep.split.value}"] += 1
            nodes_hist[len(t.node_ids)] += 1
            per_scene[t.scene_id][t.style.value] += 1
            lengths.append(t.length)
            if ep.instruction is not None:
                words.append(len(ep.instruction.tokens))
    total = sum(by_style.values())
    arr = np.asarray(lengths, dtype=float)
    report = {
        "episodes": total,
        "by_style": dict(sorted(by_style.items())),
        "by_split": dict(sorted(by_split.items())),
        "by_style_split": dict(sorted(by_style_split.items())),
        "node_count_histogram": {int(k): v for k, v in sorted(nodes_hist.items())},
        "length_m": {
            "mean": float(arr.mean()) if total else 0.0,
            "min": float(arr.min()) if total else 0.0,
            "p50": float(np.median(arr)) if total else 0.0,
            "max": float(arr.max()) if total else 0.0,
        },
        "words_mean": float(np.mean(words)) if words else 0.0,
        "per_scene": {k: dict(sorted(v.items())) for k, v in sorted(per_scene.items())},
        "episodes_per_scene": total / len(per_scene) if per_scene else 0.0,
        "r2r_reference": dict(R2R_CALIBRATION),
    }
    if manifest is not None:
        quality = [s["quality"] for s in manifest.get("scenes", []) if s.get("quality")]
        if quality:
            report["graph_quality"] = {
                k: float(np.mean([q[k] for q in quality]))
                for k in ("density", "collision_ratio", "mean_edge_length", "mean_degree", "component_count")
            }
    return report


def format_stats(report: dict) -> str:
    lines = [f"episodes              {report['episodes']}"]
    for k, v in report["by_style_split"].items():
        lines.append(f"  {k:<30}{v:>9}")
    lines.append("node-count histogram  " + "  ".join(f"{k}:{v}" for k, v in report["node_count_histogram"].items()))
    L = report["length_m"]
    lines.append(f"length (m)            mean {L['mean']:.2f}  min {L['min']:.2f}  p50 {L['p50']:.2f}  max {L['max']:.2f}")
    lines.append(f"words per instruction {report['words_mean']:.1f}")
    lines.append(f"episodes per scene    {report['episodes_per_scene']:.1f}")
    if "graph_quality" in report:
        q = report["graph_quality"]
        lines.append(
            f"graph quality         density {q['density']:.2f}  collision {100 * q['collision_ratio']:.2f}%  "
            f"edge {q['mean_edge_length']:.2f} m  degree {q['mean_degree']:.2f}"
        )
    r = report["r2r_reference"]
    lines.append(
        f"R2R reference         {r['instructions'] // 1000}k instructions, {r['words_per_instruction']} words avg, "
        f"{r['nodes_per_path']} nodes, {r['path_length_m']:.0f} m"
    )
    return "\n".join(lines) + "\n"

