"""Word classes by exchange clustering on the class-bigram likelihood.

Regular words are partitioned into ``K`` classes ``0..K-1``. The special
tokens <s>, </s> and <unk> keep singleton classes ``K``, ``K+1``, ``K+2`` that
never take part in the exchange, so a class corpus can reuse class ids as
vocabulary ids directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import SPECIALS, Corpus, Vocabulary

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClassMap:
    assignment: np.ndarray
    K: int
    side: str = "target"

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        object.__setattr__(self, "assignment", a)
        if a.size and (a.min() < 0 or a.max() >= self.num_classes):
            raise ValueError("class id out of range")

    @property
    def num_classes(self) -> int:
        """Exchangeable classes plus one singleton class per special token."""
        return self.K + len(SPECIALS)

    def __len__(self) -> int:
        return self.assignment.size

    def __getitem__(self, word_id: int) -> int:
        return int(self.assignment[word_id])

    def class_vocab(self) -> Vocabulary:
        return Vocabulary([f"C{c}" for c in range(self.K)] + list(SPECIALS))

    def members(self, c: int) -> np.ndarray:
        return np.nonzero(self.assignment == c)[0]

    def partition(self, vocab: Vocabulary | None = None) -> set[frozenset]:
        """Label-free view: the set of exchangeable classes as word sets."""
        groups: dict[int, list] = {}
        for w, c in enumerate(self.assignment.tolist()):
            if c < self.K:
                groups.setdefault(c, []).append(vocab.words[w] if vocab is not None else w)
        return {frozenset(g) for g in groups.values()}

    @classmethod
    def from_assignment(cls, vocab: Vocabulary, classes: dict[int, int] | np.ndarray, K: int,
                        side: str = "target") -> "ClassMap":
        """Assign regular words as given; specials get their reserved classes."""
        a = np.full(len(vocab), -1, dtype=np.int64)
        for w in vocab.regular_ids.tolist():
            c = int(classes[w])
            if not 0 <= c < K:
                raise ValueError(f"word {vocab.words[w]!r} assigned to class {c} outside 0..{K - 1}")
            a[w] = c
        for i, name in enumerate(SPECIALS):
            a[vocab.index[name]] = K + i
        return cls(a, K, side)

    def write_tsv(self, path, vocab: Vocabulary) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for w in vocab.regular_ids.tolist():
                fh.write(f"{vocab.words[w]}\t{int(self.assignment[w])}\n")

    @classmethod
    def read_tsv(cls, path, vocab: Vocabulary, side: str = "target") -> "ClassMap":
        classes: dict[int, int] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>class-id'")
                if parts[0] in vocab and parts[0] not in SPECIALS:
                    classes[vocab.index[parts[0]]] = int(parts[1])
        missing = [vocab.words[w] for w in vocab.regular_ids.tolist() if w not in classes]
        if missing:
            raise ValueError(f"{path}: no class for {len(missing)} words, e.g. {missing[0]!r}")
        K = max(classes.values()) + 1
        return cls.from_assignment(vocab, classes, K, side)


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def _padded_ids(text: Corpus) -> list[np.ndarray]:
    bos, eos = text.vocab.bos, text.vocab.eos
    return [np.concatenate([[bos], s, [eos]]).astype(np.int64) for s in text]


def _bigram_matrix(text: Corpus, labels: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense bigram and unigram counts after mapping ids through ``labels``."""
    seqs = [labels[s] for s in _padded_ids(text)]
    if not seqs:
        return np.zeros((size, size)), np.zeros(size)
    left = np.concatenate([s[:-1] for s in seqs])
    right = np.concatenate([s[1:] for s in seqs])
    big = np.bincount(left * size + right, minlength=size * size).reshape(size, size).astype(float)
    uni = np.bincount(np.concatenate(seqs), minlength=size).astype(float)
    return big, uni


def _objective(big: np.ndarray, uni: np.ndarray) -> float:
    return float(_xlogx(big).sum() - 2.0 * _xlogx(uni).sum())


def class_bigram_loglik(text: Corpus, cmap: ClassMap) -> float:
    """sum N(c,c') log N(c,c') - 2 sum N(c) log N(c) over the padded corpus."""
    if len(cmap) != len(text.vocab):
        raise ValueError("class map does not cover the corpus vocabulary")
    big, uni = _bigram_matrix(text, cmap.assignment, cmap.num_classes)
    return _objective(big, uni)


def map_corpus(text: Corpus, cmap: ClassMap) -> Corpus:
    """Replace every word by its class; the result lives in the class vocabulary."""
    if len(cmap) != len(text.vocab) or np.any(cmap.assignment < 0):
        raise ValueError("class map leaves corpus words unmapped")
    return Corpus(tuple(cmap.assignment[s] for s in text), cmap.class_vocab(), text.side)


def _sweep_order(text: Corpus) -> np.ndarray:
    """Regular word ids by descending frequency, ties by first occurrence."""
    V = len(text.vocab)
    counts = text.word_counts()
    first = np.full(V, np.iinfo(np.int64).max)
    pos = 0
    for s in text:
        if s.size:
            idx = np.arange(pos, pos + s.size)
            np.minimum.at(first, s, idx)
        pos += s.size
    regular = text.vocab.regular_ids
    order = np.lexsort((regular, first[regular], -counts[regular]))
    return regular[order]


def cluster_exchange(text: Corpus, K: int = 100, max_sweeps: int = 10, seed: int = 0,
                     init: str = "frequency", return_trace: bool = False):
    """Greedy exchange clustering.

    Words are visited in frequency order and moved to the class that most
    increases :func:`class_bigram_loglik`; a word only moves on a strict gain
    (lowest class id among equal best) and never leaves a class empty.
    Stops after ``max_sweeps`` or a sweep without moves. With
    ``return_trace`` the objective after initialization and after each sweep
    is returned as well.
    """
    vocab = text.vocab
    order = _sweep_order(text)
    n_types = order.size
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > n_types:
        raise ValueError(f"K={K} exceeds the {n_types} clusterable word types")
    V = len(vocab)
    Ktot = K + len(SPECIALS)

    assign = np.empty(V, dtype=np.int64)
    if init == "frequency":
        assign[order] = np.arange(n_types) % K
    elif init == "random":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n_types)
        assign[order] = perm % K
    else:
        raise ValueError(f"unknown init {init!r}")
    for i, name in enumerate(SPECIALS):
        assign[vocab.index[name]] = K + i

    seqs = _padded_ids(text)
    left = np.concatenate([s[:-1] for s in seqs])
    right = np.concatenate([s[1:] for s in seqs])
    B = sp.csr_matrix((np.ones(left.size), (left, right)), shape=(V, V))
    B.sum_duplicates()
    Bt = B.T.tocsr()
    wcount = np.bincount(np.concatenate(seqs), minlength=V).astype(float)

    M, N = _bigram_matrix(text, assign, Ktot)
    size = np.bincount(assign, minlength=Ktot)
    trace = [_objective(M, N)]

    for sweep in range(max_sweeps):
        moves = 0
        for w in order.tolist():
            a = int(assign[w])
            if size[a] == 1:
                continue
            lo, hi = B.indptr[w], B.indptr[w + 1]
            nb, cnt = B.indices[lo:hi], B.data[lo:hi]
            s = float(cnt[nb == w].sum())
            R = np.bincount(assign[nb[nb != w]], weights=cnt[nb != w], minlength=Ktot)
            lo, hi = Bt.indptr[w], Bt.indptr[w + 1]
            nb, cnt = Bt.indices[lo:hi], Bt.data[lo:hi]
            L = np.bincount(assign[nb[nb != w]], weights=cnt[nb != w], minlength=Ktot)
            n_w = wcount[w]

            M[a, :] -= R
            M[:, a] -= L
            M[a, a] -= s
            N[a] -= n_w

            gain = _move_gains(M, N, L, R, s, n_w, K)
            best = int(np.argmax(gain))
            if best != a and gain[best] > gain[a] + 1e-9 * max(1.0, abs(gain[a])):
                target = best
                moves += 1
            else:
                target = a
            M[target, :] += R
            M[:, target] += L
            M[target, target] += s
            N[target] += n_w
            assign[w] = target
            size[a] -= 1
            size[target] += 1
        # recompute from scratch to keep incremental drift out of the trace
        M, N = _bigram_matrix(text, assign, Ktot)
        trace.append(_objective(M, N))
        log.info("exchange sweep %d: %d moves, objective %.4f", sweep + 1, moves, trace[-1])
        if moves == 0:
            break
    cmap = ClassMap(assign, K, text.side)
    return (cmap, trace) if return_trace else cmap


def _move_gains(M, N, L, R, s, n_w, K) -> np.ndarray:
    """Objective change of inserting a word into each class 0..K-1."""
    Mk = M[:, :K]
    gain = np.zeros(K)
    lc = np.nonzero(L)[0]
    if lc.size:
        col = Mk[lc]
        gain += (_xlogx(col + L[lc, None]) - _xlogx(col)).sum(axis=0)
    rc = np.nonzero(R)[0]
    if rc.size:
        row = M[:K][:, rc]
        gain += (_xlogx(row + R[None, rc]) - _xlogx(row)).sum(axis=1)
    diag = np.diagonal(M)[:K]
    Lb, Rb = L[:K], R[:K]
    gain += (_xlogx(diag + Lb + Rb + s) - _xlogx(diag + Lb) - _xlogx(diag + Rb) + _xlogx(diag))
    gain -= 2.0 * (_xlogx(N[:K] + n_w) - _xlogx(N[:K]))
    return gain
