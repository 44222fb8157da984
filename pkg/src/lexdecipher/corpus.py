"""Vocabularies, encoded corpora and construction of the monotone 1:1 task.

Special tokens live at the end of every vocabulary so that regular words keep
the dense ids ``0..n-1``; this lets class corpora use class ids directly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (BOS, EOS, UNK)


class Vocabulary:
    """Bidirectional word <-> id mapping for one language side."""

    def __init__(self, words: Iterable[str], counts: Sequence[int] | None = None):
        words = list(words)
        if counts is not None and len(counts) != len(words):
            raise ValueError("counts must align with words")
        cnt = list(counts) if counts is not None else [0] * len(words)
        for sp in SPECIALS:
            if sp not in words:
                words.append(sp)
                cnt.append(0)
        self.words: tuple[str, ...] = tuple(words)
        self.counts: tuple[int, ...] = tuple(int(c) for c in cnt)
        self.index: dict[str, int] = {}
        for i, w in enumerate(self.words):
            if w in self.index:
                raise ValueError(f"duplicate word {w!r} in vocabulary")
            self.index[w] = i
        self.bos = self.index[BOS]
        self.eos = self.index[EOS]
        self.unk = self.index[UNK]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words

    def __hash__(self) -> int:
        return hash(self.words)

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    @property
    def special_ids(self) -> tuple[int, int, int]:
        return (self.bos, self.eos, self.unk)

    @property
    def regular_ids(self) -> np.ndarray:
        specials = set(self.special_ids)
        return np.array([i for i in range(len(self)) if i not in specials], dtype=np.int64)

    def id(self, word: str) -> int:
        return self.index.get(word, self.unk)

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.index.get(t, self.unk) for t in tokens], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.words[int(i)] for i in ids]

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, (w, c) in enumerate(zip(self.words, self.counts)):
                fh.write(f"{i}\t{w}\t{c}\n")

    @classmethod
    def read_tsv(cls, path) -> "Vocabulary":
        words, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or int(parts[0]) != len(words):
                    raise ValueError(f"{path}:{lineno}: expected 'id<TAB>word<TAB>count' in id order")
                words.append(parts[1])
                counts.append(int(parts[2]))
        return cls(words, counts)


def build_vocabulary(sentences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Collect tokens occurring at least ``min_count`` times.

    Ids are assigned by descending frequency, ties broken by first occurrence.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    pos = 0
    for sent in sentences:
        for tok in sent:
            if tok in SPECIALS:
                raise ValueError(f"reserved token {tok!r} in input text")
            counts[tok] += 1
            first.setdefault(tok, pos)
            pos += 1
    if not counts:
        raise ValueError("empty corpus")
    kept = [w for w, c in counts.items() if c >= min_count]
    kept.sort(key=lambda w: (-counts[w], first[w]))
    unk_mass = sum(c for w, c in counts.items() if c < min_count)
    words = kept + [BOS, EOS, UNK]
    return Vocabulary(words, [counts[w] for w in kept] + [0, 0, unk_mass])


@dataclass(frozen=True, eq=False)
class Corpus:
    """Sentences of word ids over ``vocab``; boundary tokens are implicit."""

    sentences: tuple[np.ndarray, ...]
    vocab: Vocabulary
    side: str = "target"

    def __post_init__(self):
        sents = tuple(np.asarray(s, dtype=np.int64) for s in self.sentences)
        object.__setattr__(self, "sentences", sents)
        V = len(self.vocab)
        for k, s in enumerate(sents):
            if s.size and (s.min() < 0 or s.max() >= V):
                raise ValueError(f"sentence {k + 1}: word id out of range for vocabulary of size {V}")
            if np.any((s == self.vocab.bos) | (s == self.vocab.eos)):
                raise ValueError(f"sentence {k + 1}: embedded sentence boundary token")

    @classmethod
    def from_tokens(cls, sentences: Iterable[Sequence[str]], vocab: Vocabulary, side: str = "target") -> "Corpus":
        return cls(tuple(vocab.encode(s) for s in sentences), vocab, side)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, k):
        return self.sentences[k]

    @property
    def num_tokens(self) -> int:
        return int(sum(s.size for s in self.sentences))

    @property
    def lengths(self) -> list[int]:
        return [int(s.size) for s in self.sentences]

    def tokens(self) -> list[list[str]]:
        return [self.vocab.decode(s) for s in self.sentences]

    def word_counts(self) -> np.ndarray:
        if not self.sentences:
            return np.zeros(len(self.vocab), dtype=np.int64)
        return np.bincount(np.concatenate(self.sentences), minlength=len(self.vocab))

    def write_text(self, path) -> None:
        write_tokenized(path, self.tokens())


@dataclass(frozen=True, eq=False)
class MonotoneTask:
    """Source input, its token-parallel reference, and disjoint LM text."""

    source_input: Corpus
    reference: Corpus
    lm_text: Corpus
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.source_input) != len(self.reference):
            raise ValueError("source_input and reference differ in sentence count")
        for k, (s, r) in enumerate(zip(self.source_input, self.reference)):
            if s.size != r.size:
                raise ValueError(f"sentence {k + 1}: source length {s.size} != reference length {r.size}")

    @property
    def src_vocab(self) -> Vocabulary:
        return self.source_input.vocab

    @property
    def tgt_vocab(self) -> Vocabulary:
        return self.lm_text.vocab

    def write(self, directory) -> None:
        from pathlib import Path

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.source_input.write_text(d / "input.src.txt")
        self.reference.write_text(d / "reference.tgt.txt")
        self.lm_text.write_text(d / "lm.tgt.txt")
        self.src_vocab.write_tsv(d / "src.vocab.tsv")
        self.tgt_vocab.write_tsv(d / "tgt.vocab.tsv")


def monotone_links(links: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """Keep links whose source and target positions each occur in exactly one link.

    Returned in target-position order.
    """
    links = set(links)
    src_deg = Counter(i for i, _ in links)
    tgt_deg = Counter(j for _, j in links)
    kept = [(i, j) for i, j in links if src_deg[i] == 1 and tgt_deg[j] == 1]
    kept.sort(key=lambda ij: ij[1])
    return kept


def _split_point(n: int, split_fraction: float) -> int:
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    cut = int(n * split_fraction)
    if n >= 2:
        cut = min(max(cut, 1), n - 1)
    return cut


def build_monotone_task(
    source_sents: Sequence[Sequence[str]],
    target_sents: Sequence[Sequence[str]],
    alignments: Sequence[Iterable[tuple[int, int]]],
    split_fraction: float = 0.5,
    min_count: int = 1,
    max_length: int | None = None,
) -> MonotoneTask:
    """Reorder bitext to 1:1 monotone word pairs and split it in two halves.

    Multi-aligned and unaligned words are removed; sentences left empty (or
    longer than ``max_length``) are dropped. The first part supplies the
    source input and its reference, the second part's target side the LM text.
    """
    if not (len(source_sents) == len(target_sents) == len(alignments)):
        raise ValueError("source, target and alignment inputs differ in sentence count")
    pairs: list[tuple[list[str], list[str]]] = []
    for k, (src, tgt, links) in enumerate(zip(source_sents, target_sents, alignments)):
        links = list(links)
        for i, j in links:
            if not (0 <= i < len(src)) or not (0 <= j < len(tgt)):
                raise ValueError(f"sentence {k + 1}: alignment link {i}-{j} out of range "
                                 f"(source length {len(src)}, target length {len(tgt)})")
        kept = monotone_links(links)
        if not kept:
            continue
        if max_length is not None and len(kept) > max_length:
            continue
        pairs.append(([src[i] for i, _ in kept], [tgt[j] for _, j in kept]))
    if not pairs:
        raise ValueError("empty corpus")
    cut = _split_point(len(pairs), split_fraction)
    first, second = pairs[:cut], pairs[cut:]
    if not second:
        raise ValueError("split leaves no sentences for LM text")
    src_vocab = build_vocabulary([s for s, _ in first], min_count)
    tgt_vocab = build_vocabulary([t for _, t in second], min_count)
    return MonotoneTask(
        Corpus.from_tokens([s for s, _ in first], src_vocab, "source"),
        Corpus.from_tokens([t for _, t in first], tgt_vocab, "target"),
        Corpus.from_tokens([t for _, t in second], tgt_vocab, "target"),
    )


def _normalize_key(key, vocab: Vocabulary) -> np.ndarray:
    regular = vocab.regular_ids
    n = regular.size
    if not np.array_equal(regular, np.arange(n)):
        raise ValueError("cipher requires a vocabulary with specials after regular words")
    if isinstance(key, Mapping):
        arr = np.full(n, -1, dtype=np.int64)
        for t, s in key.items():
            if not 0 <= int(t) < n:
                raise ValueError(f"key maps non-regular target id {t}")
            arr[int(t)] = int(s)
    else:
        arr = np.asarray(key, dtype=np.int64)
    if arr.size == len(vocab):
        for sp in vocab.special_ids:
            if arr[sp] != sp:
                raise ValueError("key must map special tokens to themselves")
        arr = arr[:n]
    if arr.size != n or sorted(arr.tolist()) != list(range(n)):
        raise ValueError("key is not a bijection over the target vocabulary")
    return arr


def generate_synthetic_cipher(
    target_text: Corpus,
    key=None,
    seed: int = 0,
    split_fraction: float = 0.5,
    ambiguity: float = 0.0,
) -> MonotoneTask:
    """Encipher the first part of ``target_text`` word by word.

    ``key`` maps regular target ids to source ids; when omitted a random
    permutation is drawn from ``seed``. With ``ambiguity > 0`` every target
    word also owns an alias source symbol that replaces the primary one with
    that probability (a homophonic cipher). The remainder becomes LM text.
    """
    tv = target_text.vocab
    rng = np.random.default_rng(seed)
    n = tv.regular_ids.size
    if key is None:
        key = rng.permutation(n)
    perm = _normalize_key(key, tv)
    if not 0.0 <= ambiguity < 1.0:
        raise ValueError("ambiguity must lie in [0, 1)")

    n_src = 2 * n if ambiguity > 0 else n
    src_words = [f"c{i}" for i in range(n_src)] + list(SPECIALS)
    src_vocab = Vocabulary(src_words)
    # target specials -> source specials
    full = np.empty(len(tv), dtype=np.int64)
    full[:n] = perm
    for name in SPECIALS:
        full[tv.index[name]] = src_vocab.index[name]

    cut = _split_point(len(target_text), split_fraction)
    reference = target_text.sentences[:cut]
    lm = target_text.sentences[cut:]
    source = []
    for sent in reference:
        enc = full[sent]
        if ambiguity > 0:
            alias = (rng.random(sent.size) < ambiguity) & (sent < n)
            enc = np.where(alias, enc + n, enc)
        source.append(enc)
    src_counts = np.bincount(np.concatenate(source), minlength=len(src_vocab)) if source else None
    if src_counts is not None:
        src_vocab = Vocabulary(src_words, src_counts.tolist())
    return MonotoneTask(
        Corpus(tuple(source), src_vocab, "source"),
        Corpus(reference, tv, "target"),
        Corpus(lm, tv, "target"),
        meta={"key": full, "alias_offset": n if ambiguity > 0 else None},
    )


def generate_markov_text(
    num_types: int,
    num_tokens: int,
    seed: int = 0,
    successors: int = 6,
    concentration: float = 0.3,
    background: float = 0.05,
    mean_length: float = 15.0,
    zipf: float = 1.0,
) -> Corpus:
    """Sample text from a random sparse bigram Markov chain.

    Each word prefers a handful of successors (Dirichlet weights) mixed with a
    Zipfian background; sentence lengths are geometric. The output holds
    exactly ``num_tokens`` tokens and its vocabulary is frequency ordered.
    """
    rng = np.random.default_rng(seed)
    V = num_types
    unigram = 1.0 / np.arange(1, V + 1) ** zipf
    unigram /= unigram.sum()
    trans = np.empty((V, V))
    for w in range(V):
        support = rng.choice(V, size=min(successors, V), replace=False, p=unigram)
        row = np.zeros(V)
        row[support] = rng.dirichlet(np.full(support.size, concentration))
        trans[w] = (1.0 - background) * row + background * unigram
    cum = np.cumsum(trans, axis=1)
    cum_uni = np.cumsum(unigram)
    p_end = 1.0 / mean_length

    sents: list[list[str]] = []
    total = 0
    while total < num_tokens:
        length = min(int(rng.geometric(p_end)), num_tokens - total)
        u = rng.random(length)
        seq = np.empty(length, dtype=np.int64)
        prev = -1
        for i in range(length):
            row = cum_uni if prev < 0 else cum[prev]
            prev = seq[i] = min(int(np.searchsorted(row, u[i] * row[-1], side="right")), V - 1)
        sents.append([f"w{w}" for w in seq])
        total += length
    vocab = build_vocabulary(sents)
    return Corpus.from_tokens(sents, vocab, "target")


def read_tokenized(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh]


def write_tokenized(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(" ".join(s) + "\n")


def parse_alignment_line(line: str) -> set[tuple[int, int]]:
    links = set()
    for tok in line.split():
        i, sep, j = tok.partition("-")
        if not sep:
            raise ValueError(f"malformed alignment link {tok!r}")
        links.add((int(i), int(j)))
    return links


def read_alignments(path) -> list[set[tuple[int, int]]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                out.append(parse_alignment_line(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out
