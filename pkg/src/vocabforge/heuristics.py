"""Target embedding construction: copy intersection rows, initialize the
rest with one of the four heuristics (random, fvt, clp, sava).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import alignment
from .alignment import AffineMap, TrainConfig
from .embeddings import EmbeddingMatrix, EmbeddingStats, stats as matrix_stats
from .errors import (
    DegenerateSimilarity,
    DimensionMismatch,
    FallbackRequired,
    PartitionInconsistent,
    UnencodableInput,
    VocabForgeError,
    ZeroNormEmbedding,
)
from .tokenizer import TokenizerModel, TokenPartition, canonicalize, partition

METHODS = ("random", "fvt", "clp", "sava")
HELPER_METHODS = ("clp", "sava")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class HeuristicConfig:
    """Configuration surface for the per-token initializers."""

    method: str = "fvt"
    seed: int = 0
    clp_top_k: int = 0  # 0 = dense over the full intersection
    clp_negative_policy: str = "clamp-zero"  # clamp-zero | shift-min | absolute
    random_moments: str = "per-dimension"  # per-dimension | scalar
    fallback: str = "random"  # random | mean-row

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.clp_negative_policy not in ("clamp-zero", "shift-min", "absolute"):
            raise ValueError(
                f"unknown clp_negative_policy {self.clp_negative_policy!r}"
            )
        if self.random_moments not in ("per-dimension", "scalar"):
            raise ValueError(f"unknown random_moments {self.random_moments!r}")
        if self.fallback not in ("random", "mean-row"):
            raise ValueError(f"unknown fallback {self.fallback!r}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "clp_top_k": self.clp_top_k,
            "clp_negative_policy": self.clp_negative_policy,
            "random_moments": self.random_moments,
            "fallback": self.fallback,
        }


@dataclass
class AdaptationReport:
    """Provenance bookkeeping for one adaptation run."""

    copied_count: int
    initialized_count: int
    fallback_count: int
    per_token: list[tuple[int, str]]  # (target id, copied|heuristic|fallback)
    method: HeuristicConfig
    timing_seconds: float = 0.0

    def to_dict(self, verbose: bool = False) -> dict:
        out = {
            "copied_count": self.copied_count,
            "initialized_count": self.initialized_count,
            "fallback_count": self.fallback_count,
            "method": self.method.to_dict(),
            "timing_seconds": self.timing_seconds,
        }
        if verbose:
            out["per_token"] = [[tid, prov] for tid, prov in self.per_token]
        return out


# --- per-token initializers -------------------------------------------


def g_random(
    token_id: int,
    source_stats: EmbeddingStats,
    seed: int,
    moments: str = "per-dimension",
) -> np.ndarray:
    """Sample a row from N(mu, sigma^2) of the source embedding space.

    Uses a counter-based generator keyed by (seed, token id), so the
    result is independent of evaluation order and parallelism.
    """
    dim = len(source_stats.mean)
    key = ((seed & _MASK64) << 64) | (token_id & _MASK64)
    rng = np.random.Generator(np.random.Philox(key=key))
    draw = rng.standard_normal(dim)
    if moments == "scalar":
        return source_stats.scalar_mean + np.sqrt(source_stats.scalar_variance) * draw
    return source_stats.mean + np.sqrt(source_stats.variance) * draw


def g_fvt(
    piece: str,
    source_model: TokenizerModel,
    source_emb: EmbeddingMatrix,
) -> np.ndarray:
    """Average the source embeddings of the piece's source tokenization.

    The piece must already carry the source marker convention. Unknown
    ids are dropped from the average; an empty or all-unknown
    tokenization signals fallback.
    """
    try:
        ids = source_model.encode_piece(piece)
    except UnencodableInput as exc:
        raise FallbackRequired(str(exc)) from exc
    ids = [i for i in ids if i != source_model.unk_id]
    if not ids:
        raise FallbackRequired(f"piece {piece!r} has no known source tokens")
    return source_emb.data[ids].astype(np.float64).mean(axis=0)


class ClpInitializer:
    """Similarity-weighted combination of intersection source rows.

    Weights are cosine similarities in the helper space, post-processed
    by the negative policy, optionally truncated to the top-k support,
    and normalized to sum to 1.
    """

    def __init__(
        self,
        source_emb: EmbeddingMatrix,
        helper_emb: EmbeddingMatrix,
        part: TokenPartition,
        cfg: HeuristicConfig,
    ):
        if part.shared_count == 0:
            raise PartitionInconsistent("CLP needs a non-empty intersection")
        self.cfg = cfg
        self.helper = helper_emb.data.astype(np.float64)
        tids = np.array([tid for _, _, tid in part.shared])
        sids = np.array([sid for _, sid, _ in part.shared])
        self.shared_source_rows = source_emb.data[sids].astype(np.float64)
        anchors = self.helper[tids]
        norms = np.linalg.norm(anchors, axis=1)
        if np.any(norms == 0):
            raise ZeroNormEmbedding(
                "a shared token has a zero-norm helper embedding"
            )
        self.anchor_unit = anchors / norms[:, None]

    def weights(self, token_id: int) -> np.ndarray:
        v = self.helper[token_id]
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ZeroNormEmbedding(
                f"token id {token_id} has a zero-norm helper embedding"
            )
        sims = self.anchor_unit @ (v / norm)
        policy = self.cfg.clp_negative_policy
        if policy == "clamp-zero":
            w = np.maximum(sims, 0.0)
        elif policy == "shift-min":
            w = sims - sims.min()
        else:
            w = np.abs(sims)
        k = self.cfg.clp_top_k
        if 0 < k < len(w):
            # stable top-k: ties resolved by lowest shared index
            order = np.lexsort((np.arange(len(w)), -w))
            mask = np.zeros(len(w), dtype=bool)
            mask[order[:k]] = True
            w = np.where(mask, w, 0.0)
        total = w.sum()
        if total <= 0.0:
            raise DegenerateSimilarity(
                f"all CLP weights vanished for token id {token_id}"
            )
        return w / total

    def __call__(self, token_id: int) -> np.ndarray:
        return self.weights(token_id) @ self.shared_source_rows


def g_clp(
    token_id: int,
    source_emb: EmbeddingMatrix,
    helper_emb: EmbeddingMatrix,
    part: TokenPartition,
    cfg: HeuristicConfig,
) -> np.ndarray:
    return ClpInitializer(source_emb, helper_emb, part, cfg)(token_id)


def g_sava(token_id: int, helper_emb: EmbeddingMatrix, phi: AffineMap) -> np.ndarray:
    """Map a helper row through the trained affine alignment."""
    if helper_emb.dim != phi.in_dim:
        raise DimensionMismatch(
            f"helper dim {helper_emb.dim} != map input dim {phi.in_dim}"
        )
    return phi.apply(helper_emb.data[token_id].astype(np.float64))


# --- assembly ----------------------------------------------------------


def assemble(
    source_emb: EmbeddingMatrix,
    part: TokenPartition,
    g,
    fallback=None,
    method: HeuristicConfig | None = None,
) -> tuple[EmbeddingMatrix, AdaptationReport]:
    """Build the target matrix: copy shared rows, initialize novel rows.

    g(token, target_id) produces a novel row; raising FallbackRequired
    routes the token to the fallback initializer (or re-raises when no
    fallback is given). Shared rows are copied bit-exactly.
    """
    start = time.perf_counter()
    target_size = part.shared_count + part.novel_count
    dim = source_emb.dim
    seen = np.zeros(target_size, dtype=bool)
    out = np.empty((target_size, dim), dtype=np.float32)
    provenance: list[tuple[int, str] | None] = [None] * target_size

    for _, sid, tid in part.shared:
        if not (0 <= sid < source_emb.rows and 0 <= tid < target_size) or seen[tid]:
            raise PartitionInconsistent(
                f"bad or duplicate partition entry (source {sid}, target {tid})"
            )
        seen[tid] = True
        out[tid] = source_emb.data[sid]
        provenance[tid] = (tid, "copied")

    fallback_count = 0
    for token, tid in part.novel:
        if not 0 <= tid < target_size or seen[tid]:
            raise PartitionInconsistent(
                f"bad or duplicate partition entry (target {tid})"
            )
        seen[tid] = True
        try:
            row = np.asarray(g(token, tid), dtype=np.float64)
            prov = "heuristic"
        except FallbackRequired:
            if fallback is None:
                raise
            row = np.asarray(fallback(tid), dtype=np.float64)
            prov = "fallback"
            fallback_count += 1
        if row.shape != (dim,):
            raise DimensionMismatch(
                f"initializer for target id {tid} returned shape {row.shape}, "
                f"expected ({dim},)"
            )
        out[tid] = row
        provenance[tid] = (tid, prov)

    if not seen.all():
        raise PartitionInconsistent("partition does not cover every target id")

    report = AdaptationReport(
        copied_count=part.shared_count,
        initialized_count=part.novel_count - fallback_count,
        fallback_count=fallback_count,
        per_token=[p for p in provenance if p is not None],
        method=method or HeuristicConfig(),
        timing_seconds=time.perf_counter() - start,
    )
    return EmbeddingMatrix(out, label="adapted"), report


def _make_fallback(cfg: HeuristicConfig, source_stats: EmbeddingStats):
    if cfg.fallback == "mean-row":
        return lambda tid: source_stats.mean
    return lambda tid: g_random(tid, source_stats, cfg.seed, cfg.random_moments)


def _adapt_one(
    source_emb: EmbeddingMatrix,
    source_model: TokenizerModel,
    target_model: TokenizerModel,
    part: TokenPartition,
    helper_emb: EmbeddingMatrix | None,
    cfg: HeuristicConfig,
    train_cfg: TrainConfig,
) -> tuple[EmbeddingMatrix, AdaptationReport]:
    if source_emb.rows != source_model.vocab.size:
        raise DimensionMismatch(
            f"source matrix has {source_emb.rows} rows, source vocabulary "
            f"has {source_model.vocab.size} tokens"
        )
    if cfg.method in HELPER_METHODS:
        if helper_emb is None:
            raise VocabForgeError(
                f"method {cfg.method!r} requires helper embeddings (--helper-emb)"
            )
        if helper_emb.rows != target_model.vocab.size:
            raise DimensionMismatch(
                f"helper matrix has {helper_emb.rows} rows but the target "
                f"vocabulary has {target_model.vocab.size} tokens; the helper "
                f"must be trained with the target tokenizer"
            )
    source_stats = matrix_stats(source_emb)
    fallback = _make_fallback(cfg, source_stats)

    if cfg.method == "random":
        def g(token, tid):
            return g_random(tid, source_stats, cfg.seed, cfg.random_moments)
    elif cfg.method == "fvt":
        def g(token, tid):
            piece = canonicalize(token, target_model.marker, source_model.marker)
            return g_fvt(piece, source_model, source_emb)
    elif cfg.method == "clp":
        g_init = ClpInitializer(source_emb, helper_emb, part, cfg)

        def g(token, tid):
            return g_init(tid)
    else:  # sava
        pairs_x, pairs_y = alignment.collect_pairs(helper_emb, source_emb, part)
        phi, _ = alignment.fit_gradient(pairs_x, pairs_y, train_cfg)

        def g(token, tid):
            return g_sava(tid, helper_emb, phi)

    return assemble(source_emb, part, g, fallback, method=cfg)


def adapt(
    source_emb: EmbeddingMatrix,
    source_model: TokenizerModel,
    target_model: TokenizerModel,
    helper_emb: EmbeddingMatrix | None = None,
    cfg: HeuristicConfig = HeuristicConfig(),
    train_cfg: TrainConfig | None = None,
) -> tuple[EmbeddingMatrix, AdaptationReport]:
    """Full pipeline: partition vocabularies, then copy + initialize."""
    part = partition(
        source_model.vocab, target_model.vocab,
        source_model.marker, target_model.marker,
    )
    return _adapt_one(
        source_emb, source_model, target_model, part, helper_emb, cfg,
        train_cfg or TrainConfig(seed=cfg.seed),
    )


def adapt_untied(
    source_embed: EmbeddingMatrix,
    source_head: EmbeddingMatrix,
    source_model: TokenizerModel,
    target_model: TokenizerModel,
    helper_embed: EmbeddingMatrix | None = None,
    helper_head: EmbeddingMatrix | None = None,
    cfg: HeuristicConfig = HeuristicConfig(),
    train_cfg: TrainConfig | None = None,
) -> tuple[tuple[EmbeddingMatrix, EmbeddingMatrix],
           tuple[AdaptationReport, AdaptationReport]]:
    """Untied models: run the pipeline independently per matrix.

    The partition is shared; SAVA trains a separate map per matrix.
    """
    part = partition(
        source_model.vocab, target_model.vocab,
        source_model.marker, target_model.marker,
    )
    tc = train_cfg or TrainConfig(seed=cfg.seed)
    embed_out, embed_report = _adapt_one(
        source_embed, source_model, target_model, part, helper_embed, cfg, tc
    )
    head_out, head_report = _adapt_one(
        source_head, source_model, target_model, part, helper_head, cfg, tc
    )
    return (embed_out, head_out), (embed_report, head_report)
