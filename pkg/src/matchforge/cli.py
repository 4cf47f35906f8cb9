"""Command-line entry point: one subcommand per pipeline stage, plus ``trace``.

Stages hand artifacts to each other through the content-addressed store;
``<out>/state.json`` remembers the latest hash of every named artifact and
the latest run id of every stage.  Readable copies of the outputs are also
written under ``<out>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, DataError, MatchforgeError, ModelError, TraceError
from .pipeline import SOURCE_KINDS, STAGES, REPLAY, PipelineConfig, source_bytes
from .trace import ArtifactKind, Diverged, Store, canonical_json

log = logging.getLogger("matchforge")

STAGE_ORDER = ("ingest", "plan", "train", "rank", "evaluate", "explain")
PRODUCER = {out: name for name, st in STAGES.items() for out in st.outputs}
READABLE = {"corpus": "corpus.json", "audit": "audit.jsonl", "plan": "plan.json", "split": "split.json",
            "checkpoint": "model.ckpt", "filter": "filter.json", "ranking": "rankings.jsonl",
            "metrics": "metrics.jsonl", "reports": "reports.json"}


class State:
    def __init__(self, path: Path):
        self.path = path
        self.artifacts: dict[str, str] = {}
        self.runs: dict[str, str] = {}
        if path.is_file():
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise DataError(f"corrupt state file {path}: {exc}") from None
            self.artifacts = data.get("artifacts", {})
            self.runs = data.get("runs", {})

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps({"artifacts": self.artifacts, "runs": self.runs},
                                        indent=2, sort_keys=True) + "\n", encoding="utf-8")


def parse_k(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k expects comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("--k values must be positive")
    return ks


def load_config(args: argparse.Namespace) -> PipelineConfig:
    path = getattr(args, "config", None)
    cfg = PipelineConfig.load(path) if path else PipelineConfig()
    encoder = getattr(args, "encoder", None)
    overrides = {"seed": getattr(args, "seed", None), "k_list": getattr(args, "k", None),
                 "encoder": encoder, "out_dir": getattr(args, "out", None)}
    if encoder == "bag" and cfg.encoder == "hash" and cfg.buckets == cfg.d:
        overrides["buckets"] = 256
    try:
        cfg = cfg.replace(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def open_store(cfg: PipelineConfig) -> Store:
    return Store.from_env(Path(cfg.out_dir) / "store")


def write_readable(out: Path, name: str, data: bytes) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / READABLE.get(name, name)).write_bytes(data)
    if name == "reports":
        rdir = out / "reports"
        rdir.mkdir(exist_ok=True)
        for item in json.loads(data.decode("utf-8")):
            (rdir / f"{item['name']}.json").write_bytes(canonical_json(item["report"]))
            (rdir / f"{item['name']}.txt").write_text(item["text"], encoding="utf-8")


def run_stage(name: str, cfg: PipelineConfig) -> str:
    out = Path(cfg.out_dir)
    store = open_store(cfg)
    state = State(out / "state.json")
    stage = STAGES[name]
    missing = [i for i in stage.inputs if i not in SOURCE_KINDS
               and (i not in state.artifacts or not store.has(state.artifacts[i]))]
    if "checkpoint" in missing:
        raise ModelError(f"{name} needs a trained checkpoint; run `train` first")
    if missing:
        raise DataError(f"{name} needs a {missing[0]} artifact; run `{PRODUCER[missing[0]]}` first")
    refs = {}
    for inp in stage.inputs:
        if inp in SOURCE_KINDS:
            refs[inp] = store.put_artifact(source_bytes(cfg, inp), SOURCE_KINDS[inp])
            state.artifacts[inp] = refs[inp].content_hash
            continue
        refs[inp] = store.artifact(state.artifacts[inp])
    data = {k: store.get(r.content_hash) for k, r in refs.items()}
    stage_cfg = cfg.stage_config()
    result = stage.fn(stage_cfg, data)
    config_ref = store.put_artifact(canonical_json(stage_cfg), ArtifactKind.CONFIG)
    outs = {k: store.put_artifact(v, stage.outputs[k]) for k, v in result.outputs.items()}
    rec = store.record_run(name, config_ref, refs, outs, result.metrics, cfg.seed)
    for k, v in result.outputs.items():
        write_readable(out, k, v)
        state.artifacts[k] = outs[k].content_hash
    state.artifacts["config"] = config_ref.content_hash
    state.runs[name] = rec.run_id
    state.save()
    brief = " ".join(f"{k}={_short(v)}" for k, v in sorted(result.metrics.items()))
    produced = " ".join(f"{k}:{outs[k].content_hash[:12]}" for k in sorted(outs))
    print(f"{name}: run_id={rec.run_id} {produced} {brief}".rstrip())
    return rec.run_id


def _short(v) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def cmd_trace(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    store = open_store(cfg)
    state = State(Path(cfg.out_dir) / "state.json")
    if args.action == "runs":
        for rec in store.runs():
            print(f"{rec.run_id} {rec.stage} outputs={','.join(f'{n}:{h[:12]}' for n, h in rec.outputs)}")
        return 0
    if args.action == "lineage":
        if not args.ids:
            raise TraceError("trace lineage needs an artifact hash, run id or artifact name")
        node = state.artifacts.get(args.ids[0], args.ids[0])
        lin = store.lineage(node)
        for n in lin.order:
            print(f"{lin.kinds[n]:<16} {n}")
        return 0
    run_ids = args.ids or [state.runs[s] for s in STAGE_ORDER if s in state.runs]
    if not run_ids:
        raise TraceError("no runs to verify")
    diverged = False
    for rid in run_ids:
        result = store.verify_replay(rid, REPLAY)
        if isinstance(result, Diverged):
            diverged = True
            print(f"{rid} {store.run(rid).stage}: Diverged {' '.join(result.hashes)}")
        else:
            print(f"{rid} {store.run(rid).stage}: Reproduced")
    return TraceError.exit_code if diverged else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--k", type=parse_k, default=argparse.SUPPRESS,
                        help="comma-separated cut-offs for ranking metrics, e.g. 1,3,5")
    common.add_argument("--encoder", choices=("hash", "bag"), default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="matchforge", parents=[common],
                                     description="Resume/job matching pipeline with lineage tracking.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"ingest": "clean and label the raw corpus", "plan": "choose chunk counts per role",
             "train": "split the corpus and train the match head",
             "rank": "filter and rank applicants per job",
             "evaluate": "classification and ranking metrics on the test split",
             "explain": "write candidate, recruiter and job poster reports"}
    for name in STAGE_ORDER:
        sub.add_parser(name, parents=[common], help=helps[name])
    tr = sub.add_parser("trace", parents=[common], help="inspect lineage or replay runs")
    tr.add_argument("action", choices=("runs", "lineage", "verify"))
    tr.add_argument("ids", nargs="*", help="run ids, artifact hashes or artifact names")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "trace":
            return cmd_trace(args, cfg)
        run_stage(args.command, cfg)
        return 0
    except MatchforgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
