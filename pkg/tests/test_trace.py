import hashlib
import json
import os

import pytest

from matchforge.errors import MissingInput, UnknownId, UnknownRef
from matchforge.trace import (ArtifactKind, ArtifactRef, Diverged, Reproduced, RunRecord, Store, canonical_json,
                              compute_run_id, digest)


@pytest.fixture
def store(tmp_path):
    return Store(tmp_path / "store")


def concat_stage(config, inputs):
    sep = config["sep"].encode()
    return {"out": sep.join(inputs[k] for k in sorted(inputs))}


REGISTRY = {"concat": concat_stage}


def _run_concat(store, a=b"left", b=b"right", sep="+"):
    ra = store.put_artifact(a, ArtifactKind.CORPUS)
    rb = store.put_artifact(b, ArtifactKind.CORPUS)
    cfg = {"sep": sep}
    out = concat_stage(cfg, {"a": a, "b": b})["out"]
    ro = store.put_artifact(out, ArtifactKind.REPORT)
    rec = store.record_run("concat", canonical_json(cfg), {"a": ra, "b": rb}, {"out": ro}, {"n": 2}, seed=1)
    return rec, ra, rb, ro


def test_content_addressing(store):
    r1 = store.put_artifact(b"hello", ArtifactKind.CORPUS)
    r2 = store.put_artifact(b"hello", ArtifactKind.CORPUS)
    assert r1 == r2
    assert r1.content_hash == hashlib.sha256(b"hello").hexdigest()
    assert store.blob_path(r1.content_hash).parts[-2:] == (r1.content_hash[:2], r1.content_hash[2:])
    assert len([r for r in store.records() if r["type"] == "artifact"]) == 1
    assert store.put_artifact(b"hellp", ArtifactKind.CORPUS).content_hash != r1.content_hash
    files = [p for p in store.objects.rglob("*") if p.is_file()]
    assert len(files) == 2 and not any(p.name.startswith(".tmp") for p in files)


def test_empty_bytes_ref(store):
    ref = store.put_artifact(b"", ArtifactKind.CONFIG)
    assert ref.content_hash == hashlib.sha256(b"").hexdigest()
    assert ref.byte_size == 0
    assert store.get(ref.content_hash) == b""


def test_get_unknown(store):
    with pytest.raises(UnknownRef):
        store.get("0" * 64)
    with pytest.raises(UnknownId):
        store.artifact("0" * 64)
    with pytest.raises(UnknownId):
        store.run("nope")


def test_run_id_is_recomputable(store):
    rec, ra, rb, _ = _run_concat(store)
    manual = hashlib.sha256("\n".join([rec.config_hash, *sorted([ra.content_hash, rb.content_hash]),
                                       "concat"]).encode()).hexdigest()
    assert rec.run_id == manual
    assert rec.run_id == compute_run_id("concat", rec.config_hash, [rb.content_hash, ra.content_hash])


def test_run_id_same_on_another_store(tmp_path):
    a = _run_concat(Store(tmp_path / "one"))[0]
    b = _run_concat(Store(tmp_path / "two"))[0]
    assert a.run_id == b.run_id


def test_record_citing_unstored_hash(store):
    ghost = ArtifactRef("f" * 64, ArtifactKind.CORPUS, 3, 0.0)
    with pytest.raises(UnknownRef):
        store.record_run("concat", b"{}", {"a": ghost}, {})


def test_metrics_round_trip_bit_exact(store):
    metrics = {"f1": 0.1 + 0.2, "tiny": 5e-324, "big": 1.7976931348623157e308, "none": None, "n": 3}
    ref = store.put_artifact(b"x", ArtifactKind.CORPUS)
    rec = store.record_run("s", b"{}", {"x": ref}, {}, metrics)
    back = Store(store.root).run(rec.run_id)
    assert back.metrics == metrics
    assert all(type(back.metrics[k]) is type(v) for k, v in metrics.items())
    assert RunRecord.from_record(json.loads(json.dumps(rec.to_record()))) == rec


def test_ledger_is_append_only(store):
    _run_concat(store)
    before = store.ledger_path.read_bytes()
    _run_concat(store, sep="-")
    after = store.ledger_path.read_bytes()
    assert after.startswith(before) and len(after) > len(before)
    fields = list(json.loads(after.splitlines()[-1]))
    assert fields == ["type", "run_id", "stage", "config_hash", "inputs", "outputs", "metrics", "seed",
                      "created_at"]


def test_lineage_of_leaf_and_chain(store):
    rec, ra, rb, ro = _run_concat(store)
    leaf = store.lineage(ra.content_hash)
    assert len(leaf) == 1 and leaf.order == (ra.content_hash,)
    # second stage consumes the first one's output
    rc = store.put_artifact(b"third", ArtifactKind.CORPUS)
    out2 = store.put_artifact(b"left+right|third", ArtifactKind.REPORT)
    rec2 = store.record_run("concat", canonical_json({"sep": "|"}), {"a": ro, "b": rc}, {"out": out2})
    lin = store.lineage(out2.content_hash)
    for node in (ra.content_hash, rb.content_hash, ro.content_hash, rc.content_hash, rec.run_id, rec2.run_id):
        assert node in lin
    pos = {n: i for i, n in enumerate(lin.order)}
    for child, parents in lin.parents.items():
        assert all(pos[p] < pos[child] for p in parents)
    assert lin.runs() == [rec.run_id, rec2.run_id]
    assert ro.content_hash in lin.artifacts(ArtifactKind.REPORT)
    with pytest.raises(UnknownId):
        store.lineage("missing")


def test_verify_replay_reproduced(store):
    rec = _run_concat(store)[0]
    assert store.verify_replay(rec.run_id, REGISTRY) == Reproduced()


def test_verify_replay_detects_tampered_output(store):
    rec, _, _, ro = _run_concat(store)
    path = store.blob_path(ro.content_hash)
    os.chmod(path, 0o644)
    path.write_bytes(b"left+righT")
    result = store.verify_replay(rec.run_id, REGISTRY)
    assert isinstance(result, Diverged)
    assert result.hashes == (ro.content_hash,)


def test_verify_replay_detects_changed_stage(store):
    rec, _, _, ro = _run_concat(store)
    result = store.verify_replay(rec.run_id, {"concat": lambda c, i: {"out": b"something else"}})
    assert result == Diverged((ro.content_hash,))


def test_verify_replay_missing_input(store):
    rec, ra, _, _ = _run_concat(store)
    store.blob_path(ra.content_hash).unlink()
    with pytest.raises(MissingInput):
        store.verify_replay(rec.run_id, REGISTRY)


def test_store_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MATCHFORGE_STORE", str(tmp_path / "env"))
    assert Store.from_env(tmp_path / "default").root == tmp_path / "env"
    monkeypatch.delenv("MATCHFORGE_STORE")
    assert Store.from_env(tmp_path / "default").root == tmp_path / "default"


def test_canonical_json_and_digest():
    assert canonical_json({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}\n'
    assert digest(b"abc") == hashlib.sha256(b"abc").hexdigest()
