"""Command-line entry point.

One subcommand per operation, JSON reports on stdout (or --out), all
diagnostics on stderr. Exit codes: 0 success, 1 validation error,
2 I/O error. A flat JSON --config file can supply any flag; explicit
flags win over file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import alignment, analysis, embeddings, heuristics
from .errors import VocabForgeError
from .tokenizer import (
    MarkerConvention,
    TokenPartition,
    Vocabulary,
    load_tokenizer,
    partition,
)

SCHEMA_VERSION = "1"
MARKER_CHOICES = ("meta-space", "byte-marker", "none")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _require(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_"), None) is None:
            raise UsageError(f"missing required argument --{name}")


def _echo_config(args) -> dict:
    skip = {"func", "config"}
    return {
        k: v for k, v in sorted(vars(args).items())
        if k not in skip and not callable(v)
    }


def _emit(args, payload: dict) -> None:
    report = {"schema_version": SCHEMA_VERSION, "config": _echo_config(args)}
    report.update(payload)
    text = json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    out = getattr(args, "out", None)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_vocab(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        mapping = json.load(fh)
    return Vocabulary.from_mapping(mapping)


# --- subcommands -------------------------------------------------------


def cmd_intersect(args) -> int:
    _require(args, "source-vocab", "target-vocab")
    source = _load_vocab(args.source_vocab)
    target = _load_vocab(args.target_vocab)
    src_marker = MarkerConvention.from_name(args.source_marker)
    tgt_marker = MarkerConvention.from_name(args.target_marker)
    part = partition(source, target, src_marker, tgt_marker)
    for warning in part.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    mode = (
        "raw" if src_marker.kind == tgt_marker.kind or not src_marker.marker
        or not tgt_marker.marker else "marker-canonicalized"
    )
    payload = {"canonicalization_mode": mode}
    payload.update(part.to_dict())
    _emit(args, payload)
    return 0


def cmd_stats(args) -> int:
    _require(args, "matrix")
    matrix = embeddings.load_matrix(args.matrix)
    st = embeddings.stats(matrix)
    if args.json:
        payload = {"rows": matrix.rows, "dim": matrix.dim}
        payload.update(st.to_dict())
        _emit(args, payload)
    else:
        print(f"matrix: {matrix.rows} x {matrix.dim}")
        print(f"scalar mean: {st.scalar_mean:.6g}")
        print(f"scalar variance: {st.scalar_variance:.6g}")
    return 0


def _load_model(vocab_path, merges_path, marker_name, byte_level, unk_token):
    return load_tokenizer(
        vocab_path, merges_path,
        marker=MarkerConvention.from_name(marker_name),
        byte_level=byte_level, unk_token=unk_token,
    )


def cmd_adapt(args) -> int:
    _require(
        args, "method", "source-emb", "source-vocab", "source-merges",
        "target-vocab", "target-merges", "out", "report",
    )
    cfg = heuristics.HeuristicConfig(
        method=args.method,
        seed=args.seed,
        clp_top_k=args.clp_top_k,
        clp_negative_policy=args.clp_negative_policy,
        random_moments=args.random_moments,
        fallback=args.fallback,
    )
    if cfg.method in heuristics.HELPER_METHODS and args.helper_emb is None:
        raise UsageError(
            f"method {cfg.method!r} requires --helper-emb (a helper model "
            f"trained with the target tokenizer)"
        )
    source_model = _load_model(
        args.source_vocab, args.source_merges, args.source_marker,
        args.byte_level, args.unk_token,
    )
    target_model = _load_model(
        args.target_vocab, args.target_merges, args.target_marker,
        args.byte_level, args.unk_token,
    )
    source_emb = embeddings.load_matrix(args.source_emb)
    helper_emb = (
        embeddings.load_matrix(args.helper_emb) if args.helper_emb else None
    )
    train_cfg = alignment.TrainConfig(
        steps=args.steps, learning_rate=args.lr, batch=args.batch,
        seed=args.seed,
    )

    untied = args.source_head_emb is not None
    if untied:
        source_head = embeddings.load_matrix(args.source_head_emb)
        helper_head = (
            embeddings.load_matrix(args.helper_head_emb)
            if args.helper_head_emb else helper_emb
        )
        if args.out_head is None:
            raise UsageError("--source-head-emb requires --out-head")
        (embed_out, head_out), (embed_rep, head_rep) = heuristics.adapt_untied(
            source_emb, source_head, source_model, target_model,
            helper_emb, helper_head, cfg, train_cfg,
        )
        embeddings.save_matrix(embed_out, args.out)
        embeddings.save_matrix(head_out, args.out_head)
        payload = {
            "adaptation": embed_rep.to_dict(args.verbose_report),
            "head_adaptation": head_rep.to_dict(args.verbose_report),
        }
    else:
        embed_out, embed_rep = heuristics.adapt(
            source_emb, source_model, target_model, helper_emb, cfg, train_cfg
        )
        embeddings.save_matrix(embed_out, args.out)
        payload = {"adaptation": embed_rep.to_dict(args.verbose_report)}

    report_text = json.dumps(
        {"schema_version": SCHEMA_VERSION, "config": _echo_config(args),
         **payload},
        indent=2, sort_keys=True, ensure_ascii=False,
    ) + "\n"
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report_text)
    return 0


def cmd_fit_map(args) -> int:
    _require(args, "helper-emb", "source-emb", "partition", "out")
    helper = embeddings.load_matrix(args.helper_emb)
    source = embeddings.load_matrix(args.source_emb)
    with open(args.partition, encoding="utf-8") as fh:
        part = TokenPartition.from_dict(json.load(fh))
    pairs_x, pairs_y = alignment.collect_pairs(
        helper, source, part, limit=args.limit, seed=args.seed
    )
    cfg = alignment.TrainConfig(
        steps=args.steps, learning_rate=args.lr, batch=args.batch,
        seed=args.seed,
    )
    phi, fit_report = alignment.fit_gradient(
        pairs_x, pairs_y, cfg, compare_oracle=True
    )
    alignment.save_map(phi, args.out)
    _emit_report_args = argparse.Namespace(**{**vars(args), "out": None})
    _emit(_emit_report_args, {"fit": fit_report.to_dict()})
    return 0


def cmd_fertility(args) -> int:
    _require(args, "vocab", "merges", "corpus")
    model = _load_model(
        args.vocab, args.merges, args.marker, args.byte_level, args.unk_token
    )
    report = analysis.fertility(
        model,
        analysis.iter_corpus(args.corpus),
        corpus_label=args.corpus,
        tokenizer_label=args.vocab,
        per_document=args.per_doc or args.hist_out is not None,
    )
    if args.hist_out:
        if not report.per_document:
            raise UsageError("--hist-out requires a non-empty corpus")
        with open(args.hist_out, "w", encoding="utf-8") as fh:
            fh.write(analysis.histogram_csv(report.per_document))
    payload = report.to_dict()
    if not args.per_doc:
        payload.pop("per_document", None)
    _emit(args, {"fertility": payload})
    return 0


def cmd_similarity(args) -> int:
    _require(args, "emb-a", "emb-b", "vocab")
    emb_a = embeddings.load_matrix(args.emb_a)
    emb_b = embeddings.load_matrix(args.emb_b)
    vocab = _load_vocab(args.vocab)
    marker = MarkerConvention.from_name(args.marker)
    anchors = analysis.select_anchors(
        vocab, marker, n_prefix=args.n_prefix, n_nonprefix=args.n_nonprefix,
        seed=args.seed,
    )
    sample = None
    if args.sample is not None and args.sample < emb_a.rows:
        rng = np.random.default_rng([args.seed, 1])
        sample = np.sort(
            rng.choice(emb_a.rows, size=args.sample, replace=False)
        )
    score = analysis.relative_similarity(
        emb_a, emb_b, anchors, token_sample=sample, seed=args.seed,
        projection=args.projection,
    )
    _emit(args, {"similarity": score.to_dict()})
    return 0


def cmd_params(args) -> int:
    _require(args, "before", "after", "dim", "base")
    report = analysis.param_report(
        args.before, args.after, args.dim, args.tied, args.base
    )
    _emit(args, {"params": report.to_dict()})
    return 0


# --- parser ------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat JSON file of flag defaults")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument(
        "--threads", type=int,
        default=int(os.environ.get("VOCABFORGE_THREADS", "0")),
        help="cap internal parallelism (0 = library default)",
    )
    sub.add_argument("--out", help="write the JSON report here instead of stdout")


def _add_tokenizer_flags(sub, prefix: str = "") -> None:
    p = f"--{prefix}" if prefix else "--"
    sub.add_argument(f"{p}marker", choices=MARKER_CHOICES, default="meta-space")


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(
        prog="vocabforge",
        description="Vocabulary adaptation and embedding analysis toolkit.",
    )
    subparsers = parser.add_subparsers(dest="command")
    subs: dict[str, argparse.ArgumentParser] = {}

    def sub(name, func, **kwargs):
        s = subparsers.add_parser(name, **kwargs)
        s.set_defaults(func=func)
        subs[name] = s
        return s

    s = sub("intersect", cmd_intersect,
            help="intersect two vocabularies after marker canonicalization")
    s.add_argument("--source-vocab")
    s.add_argument("--target-vocab")
    s.add_argument("--source-marker", choices=MARKER_CHOICES, default="meta-space")
    s.add_argument("--target-marker", choices=MARKER_CHOICES, default="meta-space")
    _add_common(s)

    s = sub("stats", cmd_stats, help="summarize an EMB1 embedding matrix")
    s.add_argument("--matrix")
    s.add_argument("--json", action="store_true",
                   help="emit the full JSON report with per-dimension moments")
    _add_common(s)

    s = sub("adapt", cmd_adapt,
            help="build a target embedding matrix from a source model")
    s.add_argument("--method", choices=heuristics.METHODS)
    s.add_argument("--source-emb")
    s.add_argument("--source-vocab")
    s.add_argument("--source-merges")
    s.add_argument("--target-vocab")
    s.add_argument("--target-merges")
    s.add_argument("--helper-emb")
    s.add_argument("--source-head-emb",
                   help="untied models: the language-model head matrix")
    s.add_argument("--helper-head-emb")
    s.add_argument("--out-head")
    s.add_argument("--report")
    s.add_argument("--verbose-report", action="store_true")
    s.add_argument("--clp-top-k", type=int, default=0)
    s.add_argument("--clp-negative-policy", default="clamp-zero",
                   choices=("clamp-zero", "shift-min", "absolute"))
    s.add_argument("--random-moments", default="per-dimension",
                   choices=("per-dimension", "scalar"))
    s.add_argument("--fallback", default="random", choices=("random", "mean-row"))
    s.add_argument("--source-marker", choices=MARKER_CHOICES, default="meta-space")
    s.add_argument("--target-marker", choices=MARKER_CHOICES, default="meta-space")
    s.add_argument("--byte-level", action="store_true")
    s.add_argument("--unk-token")
    s.add_argument("--steps", type=int, default=1000)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch", type=int, default=32)
    _add_common(s)

    s = sub("fit-map", cmd_fit_map,
            help="train the helper-to-source affine map on intersection pairs")
    s.add_argument("--helper-emb")
    s.add_argument("--source-emb")
    s.add_argument("--partition",
                   help="JSON partition report produced by `intersect`")
    s.add_argument("--limit", type=int)
    s.add_argument("--steps", type=int, default=1000)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch", type=int, default=32)
    _add_common(s)  # --out holds the map container; the report goes to stdout

    s = sub("fertility", cmd_fertility,
            help="tokens-per-word statistics over a corpus")
    s.add_argument("--vocab")
    s.add_argument("--merges")
    s.add_argument("--corpus")
    s.add_argument("--per-doc", action="store_true")
    s.add_argument("--hist-out", help="write a per-document histogram CSV")
    s.add_argument("--byte-level", action="store_true")
    s.add_argument("--unk-token")
    _add_tokenizer_flags(s)
    _add_common(s)

    s = sub("similarity", cmd_similarity,
            help="relative-representation similarity of two embedding spaces")
    s.add_argument("--emb-a")
    s.add_argument("--emb-b")
    s.add_argument("--vocab")
    s.add_argument("--n-prefix", type=int, default=128)
    s.add_argument("--n-nonprefix", type=int, default=128)
    s.add_argument("--sample", type=int,
                   help="score a seeded random token subset instead of all rows")
    s.add_argument("--projection", choices=("cosine", "dot"), default="cosine")
    _add_tokenizer_flags(s)
    _add_common(s)

    s = sub("params", cmd_params,
            help="parameter-count report for a vocabulary swap")
    s.add_argument("--before", type=int)
    s.add_argument("--after", type=int)
    s.add_argument("--dim", type=int)
    s.add_argument("--tied", action="store_true")
    s.add_argument("--base", type=int, help="non-embedding parameter count")
    _add_common(s)

    return parser, subs


def _merge_config(parser, subs, argv, args):
    """Apply --config values as defaults, keeping explicit flags on top."""
    with open(args.config, encoding="utf-8") as fh:
        file_cfg = json.load(fh)
    if not isinstance(file_cfg, dict):
        raise UsageError("config file must be a flat JSON object")
    sub = subs[args.command]
    allowed = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in file_cfg.items():
        dest = key.replace("-", "_")
        if dest not in allowed or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        if getattr(args, "config", None):
            args = _merge_config(parser, subs, argv, args)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (VocabForgeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
