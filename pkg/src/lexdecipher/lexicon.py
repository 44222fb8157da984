"""Sparse word-to-word lexicon p(f|e) with thresholding and backoff smoothing.

The stored table holds the thresholded, renormalized distribution p_sp(f|e) as
a CSR matrix (rows: target ids, columns: source ids, indices sorted). The
interpolation weight ``lam`` and the backoff distribution are applied only at
query time::

    p(f|e) = lam * p_sp(f|e) + (1 - lam) * p_bo(f)

A target word without a stored row has no trained distribution; it is
answered by the backoff model alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus, Vocabulary

BACKOFF_KINDS = ("uniform", "unigram", "kneser-ney")


@dataclass(frozen=True, eq=False)
class BackoffModel:
    kind: str
    probs: np.ndarray

    def __post_init__(self):
        if self.kind not in BACKOFF_KINDS:
            raise ValueError(f"unknown backoff kind {self.kind!r}")
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("backoff distribution must be a normalized vector")
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, size: int) -> "BackoffModel":
        return cls("uniform", np.full(size, 1.0 / size))

    @classmethod
    def unigram(cls, source: Corpus) -> "BackoffModel":
        counts = source.word_counts().astype(float)
        return cls("unigram", counts / counts.sum())

    @classmethod
    def kneser_ney(cls, source: Corpus) -> "BackoffModel":
        """Continuation unigram: distinct left contexts per word, <s> included."""
        bos = source.vocab.bos
        pairs = set()
        for s in source:
            prev = bos
            for w in s.tolist():
                pairs.add((prev, w))
                prev = w
        cont = np.zeros(len(source.vocab))
        for _, w in pairs:
            cont[w] += 1
        return cls("kneser-ney", cont / cont.sum())

    @classmethod
    def build(cls, kind: str, source: Corpus | None = None, size: int | None = None) -> "BackoffModel":
        if kind == "uniform":
            return cls.uniform(size if size is not None else len(source.vocab))
        if source is None:
            raise ValueError(f"{kind} backoff needs the source text")
        if kind == "unigram":
            return cls.unigram(source)
        if kind in ("kneser-ney", "kn"):
            return cls.kneser_ney(source)
        raise ValueError(f"unknown backoff kind {kind!r}")


@dataclass(frozen=True, eq=False)
class LexiconRow:
    target: int
    ids: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.ids.tolist(), self.weights.tolist()))

    def __len__(self) -> int:
        return self.ids.size


def _threshold_arrays(ids: np.ndarray, weights: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    total = weights.sum()
    if not total > 0:
        raise ValueError("row has no positive weight")
    p = weights / total
    keep = (p >= tau) & (p > 0)
    if not keep.any():
        j = int(np.argmax(p))
        return ids[j:j + 1].copy(), np.ones(1)
    kept = p[keep]
    return ids[keep], kept / kept.sum()


def threshold_renormalize(row, tau: float, target: int = -1) -> LexiconRow:
    """Normalize, drop entries below ``tau`` and renormalize the survivors.

    ``row`` is a LexiconRow or a mapping source-id -> nonnegative weight. When
    nothing survives, the single most probable entry (lowest id on ties) is
    kept with probability one.
    """
    if isinstance(row, LexiconRow):
        ids, w, target = row.ids, row.weights, row.target
    else:
        items = sorted(dict(row).items())
        ids = np.array([f for f, _ in items], dtype=np.int64)
        w = np.array([x for _, x in items], dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("weights must be nonnegative and not all zero")
    order = np.argsort(ids, kind="stable")
    ids, w = ids[order], w[order]
    ids, p = _threshold_arrays(ids, w, tau)
    return LexiconRow(target, ids, p, True)


def threshold_table(mat, tau: float) -> sp.csr_matrix:
    """Row-wise ``threshold_renormalize`` over a nonnegative sparse matrix."""
    mat = sp.csr_matrix(mat, dtype=float, copy=True)
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    n = mat.shape[0]
    lengths = np.diff(mat.indptr)
    rows = np.repeat(np.arange(n), lengths)
    sums = np.bincount(rows, weights=mat.data, minlength=n)
    p = mat.data / sums[rows]
    keep = p >= tau
    kept_per_row = np.bincount(rows[keep], minlength=n)
    for r in np.nonzero((lengths > 0) & (kept_per_row == 0))[0]:
        lo, hi = mat.indptr[r], mat.indptr[r + 1]
        keep[lo + int(np.argmax(p[lo:hi]))] = True
    kr = rows[keep]
    kp = p[keep]
    kp = kp / np.bincount(kr, weights=kp, minlength=n)[kr]
    out = sp.csr_matrix((kp, mat.indices[keep], np.concatenate([[0], np.cumsum(np.bincount(kr, minlength=n))])),
                        shape=mat.shape)
    return out


class SparseLexicon:
    """Thresholded translation table p_sp(f|e) plus query-time smoothing.

    With ``implicit_uniform`` every row is the uniform distribution and nothing
    is materialized.
    """

    def __init__(
        self,
        table: sp.csr_matrix | None,
        src_vocab_size: int,
        tgt_vocab_size: int,
        tau: float = 0.0,
        lam: float = 1.0,
        backoff: BackoffModel | None = None,
        implicit_uniform: bool = False,
    ):
        if src_vocab_size < 1 or tgt_vocab_size < 1:
            raise ValueError("vocabulary sizes must be >= 1")
        if not 0.0 <= tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        backoff = backoff if backoff is not None else BackoffModel.uniform(src_vocab_size)
        if len(backoff) != src_vocab_size:
            raise ValueError("backoff model does not cover the source vocabulary")
        shape = (tgt_vocab_size, src_vocab_size)
        if table is None:
            table = sp.csr_matrix(shape)
        table = sp.csr_matrix(table, dtype=float)
        if table.shape != shape:
            raise ValueError(f"table shape {table.shape} != {shape}")
        table.sort_indices()
        self.table = table
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size
        self.tau = float(tau)
        self.lam = float(lam)
        self.backoff = backoff
        self.implicit_uniform = implicit_uniform
        self.has_row = implicit_uniform | (np.diff(table.indptr) > 0)
        self._csc = None

    def __repr__(self) -> str:
        return (f"SparseLexicon({self.tgt_vocab_size}x{self.src_vocab_size}, active={self.num_active}, "
                f"tau={self.tau:g}, lam={self.lam:g}, backoff={self.backoff.kind})")

    # --------------------------------------------------------------- creation
    @classmethod
    def from_rows(cls, rows: Mapping[int, Mapping[int, float]], src_vocab_size: int, tgt_vocab_size: int,
                  **kw) -> "SparseLexicon":
        """Build from explicit rows; each row is normalized as given."""
        r, c, v = [], [], []
        for e, row in rows.items():
            lr = threshold_renormalize(row, 0.0, target=e)
            r.extend([e] * len(lr))
            c.extend(lr.ids.tolist())
            v.extend(lr.weights.tolist())
        table = sp.csr_matrix((v, (r, c)), shape=(tgt_vocab_size, src_vocab_size))
        return cls(table, src_vocab_size, tgt_vocab_size, **kw)

    def with_config(self, tau=None, lam=None, backoff=None) -> "SparseLexicon":
        return SparseLexicon(
            self.table, self.src_vocab_size, self.tgt_vocab_size,
            self.tau if tau is None else tau,
            self.lam if lam is None else lam,
            self.backoff if backoff is None else backoff,
            self.implicit_uniform,
        )

    # ---------------------------------------------------------------- access
    def row(self, e: int) -> LexiconRow | None:
        if self.implicit_uniform:
            n = self.src_vocab_size
            return LexiconRow(e, np.arange(n), np.full(n, 1.0 / n))
        lo, hi = self.table.indptr[e], self.table.indptr[e + 1]
        if lo == hi:
            return None
        return LexiconRow(e, self.table.indices[lo:hi].astype(np.int64), self.table.data[lo:hi].copy())

    def rows(self) -> Iterable[LexiconRow]:
        for e in range(self.tgt_vocab_size):
            r = self.row(e)
            if r is not None:
                yield r

    def sparse_prob(self, f: int, e: int) -> float:
        """p_sp(f|e); zero for inactive entries."""
        if self.implicit_uniform:
            return 1.0 / self.src_vocab_size
        lo, hi = self.table.indptr[e], self.table.indptr[e + 1]
        idx = self.table.indices[lo:hi]
        j = np.searchsorted(idx, f)
        if j < idx.size and idx[j] == f:
            return float(self.table.data[lo + j])
        return 0.0

    def smoothed_prob(self, f: int, e: int) -> float:
        pbo = float(self.backoff.probs[f])
        if not self.has_row[e]:
            return pbo
        return self.lam * self.sparse_prob(f, e) + (1.0 - self.lam) * pbo

    def column(self, f: int) -> np.ndarray:
        """Smoothed p(f|e) for every target id e."""
        pbo = float(self.backoff.probs[f])
        if self.implicit_uniform:
            return np.full(self.tgt_vocab_size, self.lam / self.src_vocab_size + (1.0 - self.lam) * pbo)
        col = np.where(self.has_row, (1.0 - self.lam) * pbo, pbo)
        if self._csc is None:
            self._csc = self.table.tocsc()
            self._csc.sort_indices()
        lo, hi = self._csc.indptr[f], self._csc.indptr[f + 1]
        col[self._csc.indices[lo:hi]] += self.lam * self._csc.data[lo:hi]
        return col

    def row_dense(self, e: int) -> np.ndarray:
        """Smoothed p(f|e) for every source id f."""
        if not self.has_row[e]:
            return self.backoff.probs.copy()
        dense = np.zeros(self.src_vocab_size)
        r = self.row(e)
        dense[r.ids] = r.weights
        return self.lam * dense + (1.0 - self.lam) * self.backoff.probs

    @property
    def num_active(self) -> int:
        """Number of materialized entries."""
        return 0 if self.implicit_uniform else int(self.table.nnz)

    def active_fraction(self) -> float:
        return active_fraction(self)

    def support_sizes(self) -> np.ndarray:
        if self.implicit_uniform:
            return np.full(self.tgt_vocab_size, self.src_vocab_size)
        return np.diff(self.table.indptr)

    # ------------------------------------------------------------------ files
    def write_tsv(self, path, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> None:
        if len(src_vocab) != self.src_vocab_size or len(tgt_vocab) != self.tgt_vocab_size:
            raise ValueError("vocabularies do not match the lexicon dimensions")
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.rows():
                ew = tgt_vocab.words[r.target]
                for f, p in zip(r.ids.tolist(), r.weights.tolist()):
                    fh.write(f"{ew}\t{src_vocab.words[f]}\t{p!r}\n")

    @classmethod
    def read_tsv(cls, path, src_vocab: Vocabulary, tgt_vocab: Vocabulary, **kw) -> "SparseLexicon":
        r, c, v = [], [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 'target<TAB>source<TAB>probability'")
                e, f, p = parts
                if e not in tgt_vocab or f not in src_vocab:
                    raise ValueError(f"{path}:{lineno}: word pair ({e}, {f}) outside the vocabularies")
                r.append(tgt_vocab.index[e])
                c.append(src_vocab.index[f])
                v.append(float(p))
        table = sp.csr_matrix((v, (r, c)), shape=(len(tgt_vocab), len(src_vocab)))
        sums = np.asarray(table.sum(axis=1)).ravel()
        bad = (np.diff(table.indptr) > 0) & (np.abs(sums - 1.0) > 1e-9)
        if bad.any():
            raise ValueError(f"{path}: row for {tgt_vocab.words[int(np.argmax(bad))]!r} is not normalized")
        return cls(table, len(src_vocab), len(tgt_vocab), **kw)


def init_uniform(src_vocab_size: int, tgt_vocab_size: int, tau: float = 0.0, lam: float = 1.0,
                 backoff: BackoffModel | None = None) -> SparseLexicon:
    """Every row uniform over the source vocabulary, stored implicitly."""
    if src_vocab_size < 1 or tgt_vocab_size < 1:
        raise ValueError("vocabulary sizes must be >= 1")
    if tau > 1.0 / src_vocab_size:
        raise ValueError("threshold would empty all rows")
    return SparseLexicon(None, src_vocab_size, tgt_vocab_size, tau, lam, backoff, implicit_uniform=True)


def smoothed_prob(lex: SparseLexicon, f: int, e: int) -> float:
    return lex.smoothed_prob(f, e)


def active_fraction(lex: SparseLexicon) -> float:
    if lex.implicit_uniform:
        return 1.0
    return lex.table.nnz / (lex.src_vocab_size * lex.tgt_vocab_size)


def class_to_word_lexicon(class_lex: SparseLexicon, c_src, c_tgt, tau: float, lam: float = 1.0,
                          backoff: BackoffModel | None = None) -> SparseLexicon:
    """Expand a class-to-class lexicon to words, then threshold per row.

    Each source word inherits the probability of its class, so all members of
    a class survive or vanish together, and target words sharing a class get
    identical rows. Target classes without a trained row yield no word rows.
    """
    src_assign = np.asarray(c_src.assignment, dtype=np.int64)
    tgt_assign = np.asarray(c_tgt.assignment, dtype=np.int64)
    if np.any(src_assign < 0) or np.any(tgt_assign < 0):
        raise ValueError("class map leaves words unmapped")
    if src_assign.max() >= class_lex.src_vocab_size or tgt_assign.max() >= class_lex.tgt_vocab_size:
        raise ValueError("class map refers to classes outside the class lexicon")
    n_src, n_tgt = src_assign.size, tgt_assign.size

    class_rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for ct in np.unique(tgt_assign).tolist():
        if not class_lex.has_row[ct]:
            continue
        q = class_lex.row_dense(ct)[src_assign]
        ids = np.nonzero(q > 0)[0]
        if ids.size == 0:
            continue
        class_rows[ct] = _threshold_arrays(ids, q[ids], tau)

    indptr = [0]
    indices, data = [], []
    for e in range(n_tgt):
        row = class_rows.get(int(tgt_assign[e]))
        if row is not None:
            indices.append(row[0])
            data.append(row[1])
            indptr.append(indptr[-1] + row[0].size)
        else:
            indptr.append(indptr[-1])
    table = sp.csr_matrix(
        (np.concatenate(data) if data else np.zeros(0),
         np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
         np.array(indptr)),
        shape=(n_tgt, n_src),
    )
    return SparseLexicon(table, n_src, n_tgt, tau, lam, backoff)
