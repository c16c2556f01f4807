"""Evaluation metrics: corpus and smoothed BLEU-n, TF-IDF consensus scoring,
and diversity-graph statistics over generated paragraphs."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .vocab import RESERVED

Ngram = tuple[str, ...]
TokenSeq = Sequence[str]

MAX_NGRAM = 4
SENTENCE_BOUNDARY = "."


def ngram_counts(tokens: TokenSeq, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU


def _closest_ref_length(cand_len: int, refs: Sequence[TokenSeq]) -> int:
    # closest reference length, ties resolved toward the shorter reference
    return min((abs(len(r) - cand_len), len(r)) for r in refs)[1]


def bleu(samples: Sequence[tuple[TokenSeq, Sequence[TokenSeq]]],
         max_n: int = 4, mode: str = "corpus") -> float:
    """Geometric mean of clipped n-gram precisions with brevity penalty.

    samples: (candidate, references) pairs, aggregated corpus-style.
    mode "corpus" uses raw precisions; "sentence" adds 1 to numerator and
    denominator for n >= 2 so single-sentence scores stay informative.
    """
    if mode not in ("corpus", "sentence"):
        raise ValueError(f"unknown BLEU mode {mode!r}")
    if not samples:
        raise ValueError("bleu needs at least one sample")
    matched = [0] * max_n
    total = [0] * max_n
    cand_len_sum = 0
    ref_len_sum = 0
    for cand, refs in samples:
        if not refs:
            raise ValueError("bleu sample without references")
        cand_len_sum += len(cand)
        ref_len_sum += _closest_ref_length(len(cand), refs)
        for n in range(1, max_n + 1):
            cg = ngram_counts(cand, n)
            if not cg:
                continue
            best = Counter()
            for ref in refs:
                rg = ngram_counts(ref, n)
                for g in cg:
                    if rg[g] > best[g]:
                        best[g] = rg[g]
            matched[n - 1] += sum(min(c, best[g]) for g, c in cg.items())
            total[n - 1] += sum(cg.values())
    if cand_len_sum == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        m, t = matched[n - 1], total[n - 1]
        if mode == "sentence" and n >= 2:
            m, t = m + 1, t + 1
        if t == 0 or m == 0:
            return 0.0
        log_sum += math.log(m / t)
    precision_term = math.exp(log_sum / max_n)
    bp = 1.0 if cand_len_sum >= ref_len_sum else math.exp(1.0 - ref_len_sum / cand_len_sum)
    return bp * precision_term


# ---------------------------------------------------------------------------
# TF-IDF consensus (CIDEr)


@dataclass
class IdfTable:
    """log(N / df) per n-gram over a reference corpus of N documents."""

    values: dict[Ngram, float]
    doc_count: int

    def get(self, gram: Ngram) -> float:
        return self.values.get(gram, 0.0)


def build_idf(reference_docs: Sequence[Sequence[TokenSeq]],
              max_n: int = MAX_NGRAM) -> IdfTable:
    """One document = the reference set of one sample; df counts documents."""
    if not reference_docs:
        raise ValueError("cannot build idf from an empty corpus")
    df: Counter = Counter()
    for refs in reference_docs:
        seen: set[Ngram] = set()
        for ref in refs:
            for n in range(1, max_n + 1):
                seen.update(ngram_counts(ref, n))
        df.update(seen)
    n_docs = len(reference_docs)
    return IdfTable(
        values={g: math.log(n_docs / c) for g, c in df.items()},
        doc_count=n_docs,
    )


def _tfidf_cosine(cand: TokenSeq, ref: TokenSeq, idf: IdfTable, n: int) -> float:
    cg = ngram_counts(cand, n)
    rg = ngram_counts(ref, n)
    num = 0.0
    for g, c in cg.items():
        if g in rg:
            w = idf.get(g)
            num += (c * w) * (rg[g] * w)
    cnorm = math.sqrt(sum((c * idf.get(g)) ** 2 for g, c in cg.items()))
    rnorm = math.sqrt(sum((c * idf.get(g)) ** 2 for g, c in rg.items()))
    if cnorm == 0.0 or rnorm == 0.0:
        return 0.0
    return num / (cnorm * rnorm)


def cider_single(cand: TokenSeq, refs: Sequence[TokenSeq], idf: IdfTable,
                 max_n: int = MAX_NGRAM) -> float:
    per_n = []
    for n in range(1, max_n + 1):
        sims = [_tfidf_cosine(cand, ref, idf, n) for ref in refs]
        per_n.append(sum(sims) / len(sims))
    return sum(per_n) / max_n


def cider(samples: Sequence[tuple[TokenSeq, Sequence[TokenSeq]]],
          idf: IdfTable, max_n: int = MAX_NGRAM) -> float:
    """Mean over candidates of the per-n-averaged TF-IDF cosine consensus."""
    if not samples:
        raise ValueError("cider needs at least one sample")
    return sum(cider_single(c, r, idf, max_n) for c, r in samples) / len(samples)


# ---------------------------------------------------------------------------
# diversity graph (token adjacency within sentences)


@dataclass
class DiversityGraph:
    """Unique tokens as nodes and within-sentence adjacencies as undirected
    edges. distinct_2 is over ordered adjacent pairs inside sentences;
    distinct_1 over all non-control tokens."""

    nodes: dict[str, int] = field(default_factory=dict)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)
    total_tokens: int = 0
    total_pairs: int = 0
    unique_pairs: int = 0

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def distinct_1(self) -> float:
        return len(self.nodes) / self.total_tokens if self.total_tokens else 0.0

    @property
    def distinct_2(self) -> float:
        return self.unique_pairs / self.total_pairs if self.total_pairs else 0.0

    def degree_histogram(self) -> dict[int, int]:
        degrees: Counter = Counter()
        for a, b in self.edges:
            degrees[a] += 1
            if b != a:
                degrees[b] += 1
        hist: Counter = Counter(degrees[node] for node in self.nodes)
        return dict(sorted(hist.items()))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"token": t, "count": c} for t, c in sorted(self.nodes.items())],
            "edges": [
                {"a": a, "b": b, "count": c}
                for (a, b), c in sorted(self.edges.items())
            ],
            "stats": {
                "node_count": self.node_count,
                "edge_count": self.edge_count,
                "total_tokens": self.total_tokens,
                "distinct_1": self.distinct_1,
                "distinct_2": self.distinct_2,
                "degree_histogram": {str(k): v for k, v in self.degree_histogram().items()},
            },
        }


def split_sentences(tokens: TokenSeq) -> list[list[str]]:
    sentences: list[list[str]] = []
    current: list[str] = []
    for tok in tokens:
        if tok == SENTENCE_BOUNDARY:
            if current:
                sentences.append(current)
                current = []
        else:
            current.append(tok)
    if current:
        sentences.append(current)
    return sentences


def diversity_graph(paragraphs: Iterable[TokenSeq]) -> DiversityGraph:
    """Control tokens are dropped; the sentence boundary token acts as a
    delimiter only and is not itself a node."""
    graph = DiversityGraph()
    ordered_pairs: set[tuple[str, str]] = set()
    for para in paragraphs:
        tokens = [t for t in para if t not in RESERVED]
        for sentence in split_sentences(tokens):
            for tok in sentence:
                graph.nodes[tok] = graph.nodes.get(tok, 0) + 1
                graph.total_tokens += 1
            for a, b in zip(sentence, sentence[1:]):
                graph.total_pairs += 1
                ordered_pairs.add((a, b))
                key = (a, b) if a <= b else (b, a)
                graph.edges[key] = graph.edges.get(key, 0) + 1
    graph.unique_pairs = len(ordered_pairs)
    return graph
