"""Content-addressed artifact store and append-only run ledger.

Layout under the store root::

    objects/ab/cdef...   raw bytes, named by their SHA-256 hex digest
    ledger.jsonl         one JSON record per line, never rewritten

Ledger records, fields in this order:

``artifact``: type, content_hash, kind, byte_size, created_at
``run``: type, run_id, stage, config_hash, inputs, outputs, metrics, seed, created_at

``inputs`` and ``outputs`` are lists of ``[name, content_hash]``.  A run id is
the SHA-256 of the config hash, the sorted input hashes and the stage name,
newline-joined; timestamps never enter a digest.
"""
from __future__ import annotations

import enum
import fcntl
import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from graphlib import TopologicalSorter
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

from .errors import MissingInput, StorageFailure, TraceError, UnknownId, UnknownRef

STORE_ENV = "MATCHFORGE_STORE"


class ArtifactKind(enum.Enum):
    CORPUS = "Corpus"
    ONTOLOGY = "Ontology"
    CHUNK_PLAN = "ChunkPlan"
    CHECKPOINT = "Checkpoint"
    RANKING = "Ranking"
    REPORT = "Report"
    CONFIG = "Config"


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def compute_run_id(stage: str, config_hash: str, input_hashes) -> str:
    parts = [config_hash, *sorted(input_hashes), stage]
    return digest("\n".join(parts).encode("utf-8"))


def canonical_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")


@dataclass(frozen=True)
class ArtifactRef:
    content_hash: str
    kind: ArtifactKind
    byte_size: int
    created_at: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    stage: str
    config_hash: str
    inputs: tuple[tuple[str, str], ...]
    outputs: tuple[tuple[str, str], ...]
    metrics: dict
    seed: Optional[int]
    created_at: float = field(default=0.0, compare=False)

    def input_hash(self, name: str) -> str:
        return dict(self.inputs)[name]

    def output_hash(self, name: str) -> str:
        return dict(self.outputs)[name]

    def to_record(self) -> dict:
        return {"type": "run", "run_id": self.run_id, "stage": self.stage,
                "config_hash": self.config_hash, "inputs": [list(x) for x in self.inputs],
                "outputs": [list(x) for x in self.outputs], "metrics": self.metrics,
                "seed": self.seed, "created_at": self.created_at}

    @classmethod
    def from_record(cls, rec: Mapping) -> "RunRecord":
        return cls(rec["run_id"], rec["stage"], rec["config_hash"],
                   tuple(tuple(x) for x in rec["inputs"]), tuple(tuple(x) for x in rec["outputs"]),
                   rec["metrics"], rec["seed"], rec.get("created_at", 0.0))


@dataclass(frozen=True)
class Lineage:
    """Ancestry of one id; ``order`` lists ancestors before descendants."""
    root: str
    order: tuple[str, ...]
    parents: dict
    kinds: dict   # id -> artifact kind value, or "Run:<stage>"

    def __len__(self) -> int:
        return len(self.order)

    def __contains__(self, node: str) -> bool:
        return node in self.parents

    def artifacts(self, kind: Optional[ArtifactKind] = None) -> list[str]:
        return [n for n in self.order if not self.kinds[n].startswith("Run:")
                and (kind is None or self.kinds[n] == kind.value)]

    def runs(self) -> list[str]:
        return [n for n in self.order if self.kinds[n].startswith("Run:")]


class Reproduced:
    def __eq__(self, other) -> bool:
        return isinstance(other, Reproduced)

    def __repr__(self) -> str:
        return "Reproduced"


@dataclass(frozen=True)
class Diverged:
    hashes: tuple[str, ...]


ReplayResult = Union[Reproduced, Diverged]
StageFn = Callable[[dict, dict], dict]


class Store:
    def __init__(self, root: "str | os.PathLike[str]"):
        self.root = Path(root)
        self.objects = self.root / "objects"
        self.ledger_path = self.root / "ledger.jsonl"
        try:
            self.objects.mkdir(parents=True, exist_ok=True)
            self.ledger_path.touch(exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot initialise store at {self.root}: {exc}") from None

    @classmethod
    def from_env(cls, default: "str | os.PathLike[str]") -> "Store":
        return cls(os.environ.get(STORE_ENV) or default)

    # --- blobs ---
    def blob_path(self, content_hash: str) -> Path:
        return self.objects / content_hash[:2] / content_hash[2:]

    def has(self, content_hash: str) -> bool:
        return self.blob_path(content_hash).is_file()

    def get(self, content_hash: str) -> bytes:
        path = self.blob_path(content_hash)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise UnknownRef(f"no stored artifact {content_hash}") from None
        except OSError as exc:
            raise StorageFailure(str(exc)) from None

    def put_artifact(self, data: bytes, kind: ArtifactKind) -> ArtifactRef:
        h = digest(data)
        path = self.blob_path(h)
        try:
            if not path.is_file():
                path.parent.mkdir(exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.replace(tmp, path)
        except OSError as exc:
            raise StorageFailure(f"cannot store {h}: {exc}") from None
        known = self._artifact_records().get((h, kind.value))
        if known is not None:
            return ArtifactRef(h, kind, len(data), known["created_at"])
        ref = ArtifactRef(h, kind, len(data), time.time())
        self._append({"type": "artifact", "content_hash": h, "kind": kind.value,
                      "byte_size": len(data), "created_at": ref.created_at})
        return ref

    # --- ledger ---
    def _append(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False) + "\n"
        try:
            with open(self.ledger_path, "a", encoding="utf-8") as fh:
                fcntl.flock(fh, fcntl.LOCK_EX)
                try:
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
                finally:
                    fcntl.flock(fh, fcntl.LOCK_UN)
        except OSError as exc:
            raise StorageFailure(f"cannot append to ledger: {exc}") from None

    def records(self) -> list[dict]:
        with open(self.ledger_path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def _artifact_records(self) -> dict:
        out = {}
        for r in self.records():
            if r["type"] == "artifact":
                out.setdefault((r["content_hash"], r["kind"]), r)
        return out

    def artifact(self, content_hash: str) -> ArtifactRef:
        for r in self.records():
            if r["type"] == "artifact" and r["content_hash"] == content_hash:
                return ArtifactRef(content_hash, ArtifactKind(r["kind"]), r["byte_size"], r["created_at"])
        raise UnknownId(f"unknown artifact {content_hash}")

    def runs(self) -> list[RunRecord]:
        return [RunRecord.from_record(r) for r in self.records() if r["type"] == "run"]

    def run(self, run_id: str) -> RunRecord:
        found = [r for r in self.runs() if r.run_id == run_id]
        if not found:
            raise UnknownId(f"unknown run {run_id}")
        return found[-1]

    def record_run(self, stage: str, config: "bytes | ArtifactRef", inputs: Mapping[str, ArtifactRef],
                   outputs: Mapping[str, ArtifactRef], metrics: Optional[Mapping] = None,
                   seed: Optional[int] = None) -> RunRecord:
        """Append a run; every cited artifact must already be stored."""
        if isinstance(config, (bytes, bytearray)):
            config = self.put_artifact(bytes(config), ArtifactKind.CONFIG)
        for ref in (config, *inputs.values(), *outputs.values()):
            if not self.has(ref.content_hash):
                raise UnknownRef(f"run cites unstored artifact {ref.content_hash}")
        rec = RunRecord(
            compute_run_id(stage, config.content_hash, [r.content_hash for r in inputs.values()]),
            stage, config.content_hash,
            tuple(sorted((k, r.content_hash) for k, r in inputs.items())),
            tuple(sorted((k, r.content_hash) for k, r in outputs.items())),
            dict(metrics or {}), seed, time.time())
        self._append(rec.to_record())
        return rec

    def producers(self) -> dict[str, RunRecord]:
        """Latest run producing each output hash."""
        out = {}
        for run in self.runs():
            for _, h in run.outputs:
                out[h] = run
        return out

    def lineage(self, node_id: str) -> Lineage:
        """Transitive ancestry of an artifact hash or run id."""
        runs = {r.run_id: r for r in self.runs()}
        artifacts = {}
        for r in self.records():
            if r["type"] == "artifact":
                artifacts.setdefault(r["content_hash"], r["kind"])
        if node_id not in runs and node_id not in artifacts:
            raise UnknownId(f"unknown id {node_id}")
        producers = self.producers()
        parents: dict[str, tuple[str, ...]] = {}
        kinds: dict[str, str] = {}
        stack = [node_id]
        while stack:
            n = stack.pop()
            if n in parents:
                continue
            if n in runs:
                run = runs[n]
                kinds[n] = f"Run:{run.stage}"
                parents[n] = tuple(sorted({h for _, h in run.inputs} | {run.config_hash}))
            else:
                kinds[n] = artifacts.get(n, "Unknown")
                prod = producers.get(n)
                parents[n] = (prod.run_id,) if prod else ()
            stack.extend(parents[n])
        order = tuple(TopologicalSorter(parents).static_order())
        return Lineage(node_id, order, parents, kinds)

    def verify_replay(self, run_id: str, registry: Mapping[str, StageFn]) -> ReplayResult:
        """Re-execute a run from its stored config and inputs and compare output hashes.

        Stored blobs whose bytes no longer match their name are reported as
        diverged as well, whether they are inputs or outputs.
        """
        run = self.run(run_id)
        if run.stage not in registry:
            raise TraceError(f"no replay function registered for stage {run.stage}")
        blobs = {}
        for name, h in (("__config__", run.config_hash), *run.inputs):
            if not self.has(h):
                raise MissingInput(f"{run.stage} input {name} ({h}) is not in the store")
            blobs[name] = self.get(h)
        bad = [h for name, h in (("__config__", run.config_hash), *run.inputs)
               if digest(blobs[name]) != h]
        for _, h in run.outputs:
            if self.has(h) and digest(self.get(h)) != h:
                bad.append(h)
        if any(h == run.config_hash or h in dict(run.inputs).values() for h in bad):
            return Diverged(tuple(dict.fromkeys(bad)))
        config = json.loads(blobs.pop("__config__").decode("utf-8"))
        produced = registry[run.stage](config, blobs)
        fresh = {name: digest(data) for name, data in produced.items()}
        for name, h in run.outputs:
            if fresh.get(name) != h:
                bad.append(h)
        bad = list(dict.fromkeys(bad))
        return Diverged(tuple(bad)) if bad else Reproduced()
