"""Command-line interface: ``mixencoder <command> [options]``.

Exit status: 0 on success, 2 on usage errors, 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .corpus import Corpus, CorpusSizes, TASKS, gen_synthetic, tokenize_split
from .cost import KINDS, CostModel, cost_eval
from .metrics import evaluate, oracle_scorer, random_scorer
from .models import MODEL_NAMES, ModelConfig, build_model

CLI_MODELS = tuple(m for m in MODEL_NAMES if m != "mix")


def _common(top: bool) -> argparse.ArgumentParser:
    # global flags are accepted before or after the command; the per-command
    # copies must not overwrite values given before it
    dflt = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=dflt(0))
    p.add_argument("--config", type=Path, default=dflt(None), help="JSON file of model / training settings")
    p.add_argument("--float", dest="float_bits", type=int, choices=(32, 64), default=dflt(None))
    return p


def _with_model(p: argparse.ArgumentParser, default: str = "mix-a") -> None:
    p.add_argument("--model", choices=CLI_MODELS, default=default)


def build_parser() -> argparse.ArgumentParser:
    common = _common(top=False)
    parser = argparse.ArgumentParser(prog="mixencoder", parents=[_common(top=True)],
                                     description="Train, evaluate and benchmark candidate-scoring encoders.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic corpus")
    p.add_argument("--task", choices=TASKS, default="ranking")
    p.add_argument("--queries", type=int, default=5000, help="training queries")
    p.add_argument("--test-queries", type=int, default=None, help="default: a tenth of --queries")
    p.add_argument("--candidates", type=int, default=10)
    p.add_argument("--out", type=Path, default=Path("corpus"))

    p = sub.add_parser("train", parents=[common], help="train a model on a corpus")
    _with_model(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--out", type=Path, default=Path("model.ckpt"))
    p.add_argument("--log", type=Path, default=None, help="metrics log (JSONL)")

    p = sub.add_parser("precompute", parents=[common], help="build a candidate cache with a trained mix model")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", type=Path, default=Path("candidates.cache"))

    p = sub.add_parser("eval", parents=[common], help="evaluate a scorer on a corpus split")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--scorer", choices=("model", "oracle", "random"), default="model")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--cache", type=Path, help="pre-built candidate cache (mix models)")
    p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("bench", parents=[common], help="latency benchmark at toy scale")
    p.add_argument("--models", nargs="+", choices=CLI_MODELS, default=["dual", "mix-a", "cross"])
    p.add_argument("--n", type=int, nargs="+", default=[10, 100, 1000])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmups", type=int, default=2)
    p.add_argument("--queries", type=int, default=1)
    p.add_argument("--q-len", type=int, default=32)
    p.add_argument("--t-len", type=int, default=32)
    p.add_argument("--json", type=Path, help="also write the report as JSON")

    p = sub.add_parser("cost", parents=[common], help="evaluate the attention complexity table")
    p.add_argument("--model", choices=tuple(dict.fromkeys(KINDS + CLI_MODELS)), default="mix")
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--d", type=int, default=None, help="candidate length (pre-computation / cross)")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--nc", type=int, default=1)

    p = sub.add_parser("ablate", parents=[common], help="train the scoring-switch variants")
    _with_model(p)
    p.add_argument("--corpus", type=Path, help="corpus directory; generated when omitted")
    p.add_argument("--queries", type=int, default=2000)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--log-dir", type=Path)
    return parser


# -- helpers --------------------------------------------------------------

def _load_config(path: Path | None) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    from .training import TrainConfig

    data = json.loads(path.read_text())
    model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
    train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(data) - model_keys - train_keys
    if unknown:
        raise ValueError(f"{path}: unknown settings {sorted(unknown)}")
    return ({k: v for k, v in data.items() if k in model_keys},
            {k: v for k, v in data.items() if k in train_keys})


def _model_config(args, vocab_size: int | None = None, **extra) -> ModelConfig:
    model_over, _ = _load_config(args.config)
    over = {**model_over, **extra, "seed": args.seed}
    if vocab_size is not None:
        over["vocab_size"] = vocab_size
    if args.float_bits is not None:
        over["float_bits"] = args.float_bits
    name = over.pop("model", None) or args.model
    return ModelConfig.preset(name, **over)


def _train_config(args, defaults=None, **extra):
    from .training import TrainConfig

    _, train_over = _load_config(args.config)
    over = {**(defaults or {}), **train_over, "seed": args.seed}
    over.update({k: v for k, v in extra.items() if v is not None})
    return TrainConfig(**over)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- commands -------------------------------------------------------------

def cmd_gen(args) -> int:
    test = args.test_queries if args.test_queries is not None else max(1, args.queries // 10)
    corpus = gen_synthetic(args.task, CorpusSizes(train=args.queries, test=test, candidates=args.candidates),
                           args.seed)
    corpus.save(args.out)
    print(f"wrote {len(corpus.train)} train / {len(corpus.test)} test records to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .training import MetricsLog, train

    corpus = Corpus.load(args.corpus)
    vocab = corpus.vocab()
    task = "classification" if corpus.task == "classification" else "ranking"
    cfg = _model_config(args, vocab_size=len(vocab), task=task)
    model = build_model(cfg)
    tcfg = _train_config(args, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr)
    log = MetricsLog(args.log)
    try:
        result = train(model, corpus, tcfg, log, vocab)
    finally:
        log.close()
    save_checkpoint(args.out, model)
    _print({"model": cfg.model, "checkpoint": str(args.out), **result})
    return 0


def cmd_precompute(args) -> int:
    from .checkpoint import load_checkpoint
    from .encoder import TokenSequence
    from .precompute import build_cache

    model = load_checkpoint(args.checkpoint)
    if model.kind != "mix":
        raise ValueError(f"precompute needs a mix model, checkpoint holds {model.cfg.model}")
    corpus = Corpus.load(args.corpus)
    split = tokenize_split(corpus.vocab(model.cfg.kmax), getattr(corpus, args.split))
    seqs = [(int(cid), TokenSequence.of(ids[m])) for cid, ids, m in zip(split.cand_ids, split.c_ids, split.c_mask)]
    cache = build_cache(seqs, model)
    cache.save(args.out)
    _print({"cache": str(args.out), "entries": cache.n, "bytes": args.out.stat().st_size,
            "sha256": cache.checksum()})
    return 0


def _cache_scorer(model, cache, vocab):
    def score(records):
        split = tokenize_split(vocab, records)
        out = []
        for i, r in enumerate(records):
            E0, h0 = cache.lookup([c for c, _ in r.candidates])
            qi, qm = split.q_ids[i : i + 1], split.q_mask[i : i + 1]
            width = int(qm.sum())
            out.append(model.score_prepared(qi[:, :width], qm[:, :width], (E0.data, h0.data))[0])
        return out

    return score


def cmd_eval(args) -> int:
    corpus = Corpus.load(args.corpus)
    records = getattr(corpus, args.split)
    metrics = ("accuracy",) if corpus.task == "classification" else ("mrr", "r1")
    if args.scorer == "oracle":
        scorer = oracle_scorer
    elif args.scorer == "random":
        scorer = random_scorer(args.seed)
    else:
        from .checkpoint import load_checkpoint
        from .training import ModelScorer

        if args.checkpoint is None:
            raise ValueError("--scorer model needs --checkpoint")
        model = load_checkpoint(args.checkpoint)
        vocab = corpus.vocab(model.cfg.kmax)
        if args.cache is not None:
            from .precompute import load_cache

            if model.kind != "mix":
                raise ValueError("--cache applies to mix models only")
            scorer = _cache_scorer(model, load_cache(args.cache), vocab)
        else:
            scorer = ModelScorer(model, vocab)
    _print(evaluate(scorer, records, metrics))
    return 0


def cmd_bench(args) -> int:
    from .bench import bench_latency

    models = {}
    for name in args.models:
        cfg = _model_config(argparse.Namespace(**{**vars(args), "model": name}),
                            max_len=max(128, args.q_len + args.t_len + 3))
        models[name] = build_model(cfg)
    report = bench_latency(models, args.n, args.reps, args.warmups, args.q_len, args.t_len, args.queries, args.seed)
    print(report.table())
    if args.json:
        args.json.write_text(report.to_json())
    return 0


def cmd_cost(args) -> int:
    kind = "mix" if args.model.startswith("mix") else args.model
    if kind not in KINDS:
        raise ValueError(f"no complexity entry for {args.model!r}; choose from {KINDS}")
    d = args.d if args.d is not None else (args.q if kind == "cross" else 1)
    if kind == "cross" and args.d is None:
        raise ValueError("cross-encoder cost needs --d")
    pre, online = cost_eval(kind, args.h, args.q, d, args.k, args.nc)
    pre_expr, online_expr = CostModel(kind).expression()
    params = {"h": args.h, "q": args.q, "d": args.d, "k": args.k, "N_c": args.nc}
    out = {"model": kind, "params": params, "online": {"expression": online_expr, "value": online}}
    if args.d is not None:
        out["precompute"] = {"expression": pre_expr, "value": pre}
    _print(out)
    return 0


def cmd_ablate(args) -> int:
    from .ablation import pathway_check, run_ablation
    from .corpus import tokenize
    from .models import MixEncoder

    if not args.model.startswith("mix"):
        raise ValueError("ablation switches exist for mix models only")
    if args.corpus:
        corpus = Corpus.load(args.corpus)
    else:
        corpus = gen_synthetic("ranking", CorpusSizes(train=args.queries, test=max(1, args.queries // 5)), args.seed)
    vocab = corpus.vocab()
    base = _model_config(args, vocab_size=len(vocab))
    tcfg = _train_config(args, defaults={"batch_size": 32}, epochs=args.epochs)
    if args.log_dir:
        args.log_dir.mkdir(parents=True, exist_ok=True)
    results = run_ablation(corpus, base, tcfg, log_dir=args.log_dir)
    probe = MixEncoder(base)
    rec = corpus.test[0]
    q_ids, q_mask = tokenize(vocab, [rec.query])
    c_ids, c_mask = tokenize(vocab, [t for _, t in rec.candidates])
    E0, h0 = probe.prepare_candidates(c_ids, c_mask)
    _print({"results": results, "pathways_isolated": pathway_check(probe, q_ids, q_mask, E0, h0)})
    return 0


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "precompute": cmd_precompute, "eval": cmd_eval,
    "bench": cmd_bench, "cost": cmd_cost, "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)  # exits with status 2 on usage errors
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError, NotImplementedError) as exc:
        print(f"mixencoder {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
