"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 stage failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline, synthetic
from .config import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2

# subcommand -> last topic stage to run (None: no topic stages)
_TOPIC_LAST = {"ingest": "ingest", "cluster": "cluster", "expand": "expand", "valence": "valence",
               "all": "valence", "embed": None, "bias": None}
_AGGREGATE = {"embed": ("embed",), "bias": ("align", "embed", "bias"), "all": ("align", "embed", "bias")}


def _pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline TOML file")
    p.add_argument("--topic", help="run only this topic (a name from the config or a topic TOML file)")
    p.add_argument("--resume", action="store_true", help="skip stages whose outputs are current")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--input", nargs="+", help="override the input JSONL files")
    p.add_argument("--gazetteer", help="override the location gazetteer file")
    p.add_argument("--jobs", type=int, default=1, help="topics processed in parallel")
    p.add_argument("--backend", choices=("auto", "cython", "python"), help="kernel backend")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stancelens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stancelens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "filter input posts per topic",
        "cluster": "build user vectors, project, and cluster per topic",
        "expand": "train the stance classifier and label more users",
        "valence": "score media and accounts per topic",
        "embed": "node2vec embeddings of user-hashtag and user-mention graphs",
        "bias": "align topics, average valence, and evaluate the bias classifier",
        "all": "every per-topic stage, then the cross-topic aggregate",
    }
    for name, text in helps.items():
        _pipeline_args(sub.add_parser(name, help=text))

    s = sub.add_parser("synth", help="write a planted synthetic corpus with a ready config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--users", type=int, default=500, help="users per community")
    s.add_argument("--elites", type=int, default=20, help="elite accounts per community")
    s.add_argument("--p-in", type=float, default=0.9)
    s.add_argument("--p-out", type=float, default=0.1)
    s.add_argument("--media", type=int, default=10, help="media per leaning")
    s.add_argument("--skew", type=float, default=0.8, help="probability of citing own-leaning media")
    s.add_argument("--posts", type=float, default=30.0, help="mean posts per user")
    s.add_argument("--topics", type=int, default=3)
    s.add_argument("-v", "--verbose", action="count", default=0)
    s.add_argument("--top-n", type=int, help="top_n written into the config (default 40%% of users)")
    return parser


def _load(args) -> pipeline.PipelineConfig:
    overrides = {"seed": args.seed, "output_dir": args.out, "inputs": args.input,
                 "gazetteer": args.gazetteer}
    topic_file = None
    if args.topic and Path(args.topic).suffix == ".toml":
        topic_file = args.topic
        overrides["topics"] = [topic_file]
    cfg = pipeline.load_config(args.config, overrides)
    if args.topic and topic_file is None:
        cfg.topics = [cfg.topic(args.topic)]
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def _run_pipeline(args) -> int:
    cfg = _load(args)
    backend = None if args.backend in (None, "auto") else args.backend
    status = EXIT_OK
    last = _TOPIC_LAST[args.command]
    if last is not None:
        results = pipeline.run_topics(cfg, args.resume, last, args.jobs, backend)
        pipeline.write_summary(cfg, results)
        for res in results:
            if res.ok:
                print(f"{res.topic}: ran {','.join(res.ran) or '-'}; skipped {','.join(res.skipped) or '-'}")
            else:
                print(f"{res.topic}: FAILED {res.error}", file=sys.stderr)
                status = EXIT_STAGE
    if args.command in _AGGREGATE:
        agg = pipeline.run_aggregate(cfg, args.resume, _AGGREGATE[args.command], backend)
        if not agg.ok:
            print(f"aggregate: FAILED {agg.error}", file=sys.stderr)
            return EXIT_STAGE
        print(f"aggregate: ran {','.join(agg.ran) or '-'}; skipped {','.join(agg.skipped) or '-'}")
        for row in agg.report:
            print(f"  {row.name:<40} n={row.n_media:<4} acc={row.accuracy:.3f} mae={row.mae:.3f}")
    return status


def _run_synth(args) -> int:
    try:
        params = synthetic.SynthParams(
            n_users=args.users, n_elite=args.elites, p_in=args.p_in, p_out=args.p_out,
            n_media=args.media, citation_skew=args.skew, posts_per_user=args.posts,
            n_topics=args.topics, seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    corpus = synthetic.generate(params)
    cfg = synthetic.write_corpus(corpus, args.out, args.top_n)
    print(f"wrote {len(corpus.posts)} posts from {len(corpus.users)} users; config: {cfg}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "synth":
            return _run_synth(args)
        return _run_pipeline(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
