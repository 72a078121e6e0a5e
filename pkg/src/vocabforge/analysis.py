"""Corpus and embedding-space analysis: tokenizer fertility,
relative-representation similarity, and parameter-count deltas.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import (
    DimensionMismatch,
    EmptyCorpus,
    InsufficientTokens,
    ZeroNormRow,
)
from .tokenizer import MarkerConvention, TokenizerModel, Vocabulary


@dataclass(frozen=True)
class FertilityReport:
    """Tokens-per-word statistics for one tokenizer over one corpus."""

    corpus_label: str
    tokenizer_label: str
    word_count: int
    token_count: int
    fertility: float
    per_document: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        out = {
            "corpus_label": self.corpus_label,
            "tokenizer_label": self.tokenizer_label,
            "word_count": self.word_count,
            "token_count": self.token_count,
            "fertility": self.fertility,
        }
        if self.per_document is not None:
            out["per_document"] = list(self.per_document)
        return out


def iter_corpus(path: str):
    """Yield documents: one per line for a file, one per .txt for a dir."""
    if os.path.isdir(path):
        for name in sorted(os.listdir(path)):
            if name.endswith(".txt"):
                with open(os.path.join(path, name), encoding="utf-8") as fh:
                    yield fh.read()
    else:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    yield line


def fertility(
    model: TokenizerModel,
    documents,
    corpus_label: str = "",
    tokenizer_label: str = "",
    per_document: bool = False,
) -> FertilityReport:
    """Average number of tokens each whitespace-delimited word splits into.

    Words are maximal runs of non-whitespace (Unicode split); each word
    is tokenized with a preceding word boundary. The corpus fertility is
    total tokens / total words, not a mean of per-document ratios, so it
    is independent of document order and sharding.
    """
    total_words = 0
    total_tokens = 0
    per_doc: list[float] = []
    for doc in documents:
        words = doc.split()
        if not words:
            continue
        doc_tokens = 0
        for word in words:
            doc_tokens += len(model.tokenize_word(word))
        total_words += len(words)
        total_tokens += doc_tokens
        if per_document:
            per_doc.append(doc_tokens / len(words))
    if total_words == 0:
        raise EmptyCorpus(f"corpus {corpus_label!r} contains no words")
    return FertilityReport(
        corpus_label=corpus_label,
        tokenizer_label=tokenizer_label,
        word_count=total_words,
        token_count=total_tokens,
        fertility=total_tokens / total_words,
        per_document=tuple(per_doc) if per_document else None,
    )


def histogram_csv(values, bins: int = 40) -> str:
    """Bin per-document fertilities into a plottable CSV."""
    counts, edges = np.histogram(np.asarray(list(values), dtype=float), bins=bins)
    lines = ["bin_left,bin_right,count"]
    for left, right, count in zip(edges[:-1], edges[1:], counts):
        lines.append(f"{left:.6f},{right:.6f},{int(count)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SimilarityScore:
    score: float  # 0..100
    anchor_count: int
    anchor_ids: tuple[int, ...]
    seed: int

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "anchor_count": self.anchor_count,
            "anchor_ids": list(self.anchor_ids),
            "seed": self.seed,
        }


def select_anchors(
    vocab: Vocabulary,
    marker: MarkerConvention,
    n_prefix: int = 128,
    n_nonprefix: int = 128,
    seed: int = 0,
) -> list[int]:
    """Seeded sample of word-initial (prefix) and word-internal tokens.

    A prefix token is one whose string starts with the word-boundary
    marker. Sampling is uniform without replacement and depends only on
    (vocab, marker, counts, seed).
    """
    if marker.marker:
        prefix_ids = [
            tid for tid, tok in enumerate(vocab.id_to_token)
            if tok.startswith(marker.marker)
        ]
    else:
        prefix_ids = []
    prefix_set = set(prefix_ids)
    nonprefix_ids = [tid for tid in range(vocab.size) if tid not in prefix_set]
    if len(prefix_ids) < n_prefix:
        raise InsufficientTokens(
            f"requested {n_prefix} prefix tokens, vocabulary has "
            f"{len(prefix_ids)}"
        )
    if len(nonprefix_ids) < n_nonprefix:
        raise InsufficientTokens(
            f"requested {n_nonprefix} non-prefix tokens, vocabulary has "
            f"{len(nonprefix_ids)}"
        )
    rng = np.random.default_rng(seed)
    chosen_non = rng.choice(len(nonprefix_ids), size=n_nonprefix, replace=False)
    chosen_pre = rng.choice(len(prefix_ids), size=n_prefix, replace=False)
    anchors = [nonprefix_ids[i] for i in sorted(chosen_non)]
    anchors += [prefix_ids[i] for i in sorted(chosen_pre)]
    return anchors


def _unit_rows(data: np.ndarray, ids: np.ndarray, what: str) -> np.ndarray:
    rows = data[ids].astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ZeroNormRow(f"{what} id {ids[bad[0]]} has a zero-norm embedding")
    return rows / norms[:, None]


def relative_similarity(
    emb_a: EmbeddingMatrix,
    emb_b: EmbeddingMatrix,
    anchors,
    token_sample=None,
    seed: int = 0,
    projection: str = "cosine",
) -> SimilarityScore:
    """Compare two embedding spaces through anchor-relative coordinates.

    Each token is re-expressed as its vector of projections onto the
    anchor rows of its own space (cosine by default, raw dot products
    with projection="dot"); the score is 100 times the mean cosine
    between the two relative representations.
    """
    if emb_a.rows != emb_b.rows:
        raise DimensionMismatch(
            f"matrices index different vocabularies "
            f"({emb_a.rows} vs {emb_b.rows} rows)"
        )
    anchors = np.asarray(list(anchors), dtype=int)
    if token_sample is None:
        sample = np.arange(emb_a.rows)
    else:
        sample = np.asarray(list(token_sample), dtype=int)

    def relative(emb: EmbeddingMatrix, label: str) -> np.ndarray:
        if projection == "cosine":
            anchor_rows = _unit_rows(emb.data, anchors, f"{label} anchor")
            token_rows = _unit_rows(emb.data, sample, f"{label} token")
        else:
            anchor_rows = emb.data[anchors].astype(np.float64)
            token_rows = emb.data[sample].astype(np.float64)
        return token_rows @ anchor_rows.T

    rel_a = relative(emb_a, "left")
    rel_b = relative(emb_b, "right")
    norm_a = np.linalg.norm(rel_a, axis=1)
    norm_b = np.linalg.norm(rel_b, axis=1)
    bad = np.flatnonzero((norm_a == 0) | (norm_b == 0))
    if bad.size:
        raise ZeroNormRow(
            f"token id {sample[bad[0]]} has a zero-norm relative representation"
        )
    cosines = np.sum(rel_a * rel_b, axis=1) / (norm_a * norm_b)
    score = 100.0 * math.fsum(cosines) / len(cosines)
    return SimilarityScore(
        score=score,
        anchor_count=len(anchors),
        anchor_ids=tuple(int(a) for a in anchors),
        seed=seed,
    )


@dataclass(frozen=True)
class ParamCountReport:
    """Parameter totals before/after a vocabulary swap. Exact integers."""

    vocab_before: int
    vocab_after: int
    dim: int
    tied: bool
    non_embedding_params: int
    total_before: int
    total_after: int
    delta: int

    def to_dict(self) -> dict:
        return {
            "vocab_before": self.vocab_before,
            "vocab_after": self.vocab_after,
            "dim": self.dim,
            "tied": self.tied,
            "non_embedding_params": self.non_embedding_params,
            "total_before": self.total_before,
            "total_after": self.total_after,
            "delta": self.delta,
        }


def param_report(
    vocab_before: int,
    vocab_after: int,
    dim: int,
    tied: bool,
    non_embedding_params: int,
) -> ParamCountReport:
    if min(vocab_before, vocab_after, dim) <= 0 or non_embedding_params < 0:
        raise ValueError("all counts must be positive")
    factor = 1 if tied else 2
    total_before = non_embedding_params + vocab_before * dim * factor
    total_after = non_embedding_params + vocab_after * dim * factor
    return ParamCountReport(
        vocab_before=vocab_before,
        vocab_after=vocab_after,
        dim=dim,
        tied=tied,
        non_embedding_params=non_embedding_params,
        total_before=total_before,
        total_after=total_after,
        delta=(vocab_before - vocab_after) * dim * factor,
    )
