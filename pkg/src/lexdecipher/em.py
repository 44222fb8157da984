"""EM training of the lexicon: pruned forward-backward E-step, thresholded M-step."""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus, MonotoneTask
from .lexicon import BackoffModel, SparseLexicon, init_uniform, threshold_table
from .ngram import NGramLM
from .trellis import LexiconCache, LMStateCache, SearchConfig, Trellis, ZeroProbabilityError, preselect

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig", "PosteriorAccumulator", "TrainStats", "IterationRecord",
    "forward_backward", "m_step", "train", "preselect", "e_step",
]


def _beam(value) -> int | None:
    if value is None:
        return None
    if isinstance(value, str):
        if value.lower() in ("inf", "none", "infinity", "unbounded"):
            return None
        value = int(value)
    if isinstance(value, float) and math.isinf(value):
        return None
    value = int(value)
    if value < 0:
        raise ValueError("beam sizes must be >= 0")
    return value


@dataclass
class TrainConfig:
    """Training hyper-parameters; the defaults are the large-vocabulary recipe."""

    iterations: int = 100
    tau: float = 1e-6
    lam: float = 0.15
    backoff: str = "uniform"
    histogram_beam: int | None = 50
    lex_beam: int | None = 5
    lm_beam: int | None = 50
    init: str = "uniform"
    convergence_rel_tol: float | None = None
    workers: int = 1
    block_size: int = 64
    eval_every: int = 0
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        self.histogram_beam = _beam(self.histogram_beam)
        self.lex_beam = _beam(self.lex_beam)
        self.lm_beam = _beam(self.lm_beam)
        if self.histogram_beam == 0:
            raise ValueError("histogram_beam must be >= 1")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.backoff not in ("uniform", "unigram", "kneser-ney", "kn"):
            raise ValueError(f"unknown backoff {self.backoff!r}")
        if self.block_size < 1 or self.workers < 1:
            raise ValueError("block_size and workers must be >= 1")

    @property
    def search(self) -> SearchConfig:
        return SearchConfig(self.histogram_beam, self.lex_beam, self.lm_beam)

    @classmethod
    def exact(cls, **kw) -> "TrainConfig":
        """Unpruned, unthresholded, unsmoothed EM."""
        base = dict(tau=0.0, lam=1.0, histogram_beam=None, lex_beam=None, lm_beam=None)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        """Read flat ``key=value`` lines; ``overrides`` win over the file."""
        kinds = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, val = line.partition("=")
                key, val = key.strip().replace("-", "_"), val.strip()
                if not sep or key not in kinds:
                    raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
                values[key] = val
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_strings(values)

    @classmethod
    def from_strings(cls, values: dict) -> "TrainConfig":
        out = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            v = values[f.name]
            if not isinstance(v, str):
                out[f.name] = v
            elif f.name in ("histogram_beam", "lex_beam", "lm_beam"):
                out[f.name] = _beam(v)
            elif f.name in ("tau", "lam"):
                out[f.name] = float(v)
            elif f.name == "convergence_rel_tol":
                out[f.name] = None if v.lower() == "none" else float(v)
            elif f.name == "checkpoint_dir":
                out[f.name] = None if v.lower() in ("", "none") else v
            elif f.name in ("backoff", "init"):
                out[f.name] = v
            else:
                out[f.name] = int(v)
        return cls(**out)

    def to_lines(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name}={'inf' if v is None and f.name.endswith('beam') else v}")
        return out


class PosteriorAccumulator:
    """Expected counts c(e, f), stored per work block.

    Blocks are reduced in block-index order when the counts are read, so the
    result does not depend on the order in which blocks were merged.
    """

    def __init__(self, tgt_vocab_size: int, src_vocab_size: int):
        self.shape = (tgt_vocab_size, src_vocab_size)
        self.blocks: dict[int, sp.csr_matrix] = {}
        self.logliks: dict[int, float] = {}

    def add_block(self, index: int, counts: sp.csr_matrix, loglik: float) -> None:
        if index in self.blocks:
            raise ValueError(f"block {index} already accumulated")
        if counts.shape != self.shape:
            raise ValueError("block counts have the wrong shape")
        self.blocks[index] = counts
        self.logliks[index] = loglik

    def merge(self, other: "PosteriorAccumulator") -> "PosteriorAccumulator":
        if other.shape != self.shape:
            raise ValueError("accumulators of different shapes")
        out = PosteriorAccumulator(*self.shape)
        for acc in (self, other):
            for i in acc.blocks:
                out.add_block(i, acc.blocks[i], acc.logliks[i])
        return out

    @classmethod
    def from_counts(cls, counts: dict, tgt_vocab_size: int, src_vocab_size: int) -> "PosteriorAccumulator":
        """Single-block accumulator from ``{(e, f): count}``."""
        acc = cls(tgt_vocab_size, src_vocab_size)
        if counts:
            keys = list(counts)
            mat = sp.csr_matrix(([counts[k] for k in keys], ([k[0] for k in keys], [k[1] for k in keys])),
                                shape=acc.shape)
        else:
            mat = sp.csr_matrix(acc.shape)
        acc.add_block(0, mat, 0.0)
        return acc

    def __len__(self) -> int:
        return len(self.blocks)

    def counts(self) -> sp.csr_matrix:
        total = sp.csr_matrix(self.shape)
        for i in sorted(self.blocks):
            total = total + self.blocks[i]
        total.sum_duplicates()
        total.sort_indices()
        return total

    @property
    def loglik(self) -> float:
        return float(sum(self.logliks[i] for i in sorted(self.logliks)))


@dataclass
class IterationRecord:
    iteration: int
    loglik: float
    active_fraction: float
    accuracy: float | None
    seconds: float


@dataclass
class TrainStats:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def logliks(self) -> list[float]:
        return [r.loglik for r in self.records]

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                acc = "nan" if r.accuracy is None else repr(r.accuracy)
                fh.write(f"{r.iteration}\t{r.loglik!r}\t{r.active_fraction!r}\t{acc}\t{r.seconds:.3f}\n")


def forward_backward(sentence, lex: SparseLexicon, lm: NGramLM, config: TrainConfig | SearchConfig | None = None):
    """Posteriors p_n(e | f) per position and the sentence log-likelihood.

    Returns ``(posteriors, loglik)`` where ``posteriors[n]`` is a pair of
    arrays (target ids, probabilities). Under pruning the log-likelihood only
    counts retained paths.
    """
    search = _search_config(config)
    sentence = np.asarray(sentence)
    if sentence.size == 0:
        raise ValueError("empty sentence")
    lmc = LMStateCache(lm, search.lm_beam)
    lexc = LexiconCache(lex, lmc.hidden, search.lex_beam)
    return Trellis(lexc, lmc, search).posteriors(sentence)


def _search_config(config) -> SearchConfig:
    if config is None:
        return SearchConfig()
    if isinstance(config, SearchConfig):
        return config
    return config.search


def _block_counts(trellis: Trellis, sentences, shape) -> tuple[sp.csr_matrix, float]:
    es, fs, ps = [], [], []
    loglik = 0.0
    for sent in sentences:
        if sent.size == 0:
            continue
        try:
            post, ll = trellis.posteriors(sent)
        except ZeroProbabilityError as exc:
            log.warning("skipping sentence of length %d: %s", sent.size, exc)
            continue
        loglik += ll
        for f, (words, probs) in zip(sent.tolist(), post):
            es.append(words)
            fs.append(np.full(words.size, f, dtype=np.int64))
            ps.append(probs)
    if not es:
        return sp.csr_matrix(shape), loglik
    mat = sp.coo_matrix((np.concatenate(ps), (np.concatenate(es), np.concatenate(fs))), shape=shape).tocsr()
    mat.sum_duplicates()
    return mat, loglik


_FORK_STATE: tuple | None = None


def _fork_block(args):
    index, lo, hi = args
    trellis, sentences, shape = _FORK_STATE
    counts, ll = _block_counts(trellis, sentences[lo:hi], shape)
    return index, counts, ll


def e_step(source: Corpus, lex: SparseLexicon, lm: NGramLM, config: TrainConfig,
           lm_cache: LMStateCache | None = None) -> PosteriorAccumulator:
    """Expected counts over the whole source text."""
    global _FORK_STATE
    search = config.search
    lmc = lm_cache if lm_cache is not None else LMStateCache(lm, search.lm_beam)
    lexc = LexiconCache(lex, lmc.hidden, search.lex_beam)
    trellis = Trellis(lexc, lmc, search)
    shape = (lex.tgt_vocab_size, lex.src_vocab_size)
    sents = source.sentences
    bounds = [(i, lo, min(lo + config.block_size, len(sents)))
              for i, lo in enumerate(range(0, len(sents), config.block_size))]
    acc = PosteriorAccumulator(*shape)
    if config.workers > 1 and len(bounds) > 1 and "fork" in mp.get_all_start_methods():
        _FORK_STATE = (trellis, sents, shape)
        try:
            with mp.get_context("fork").Pool(config.workers) as pool:
                for i, counts, ll in pool.imap_unordered(_fork_block, bounds):
                    acc.add_block(i, counts, ll)
        finally:
            _FORK_STATE = None
    else:
        for i, lo, hi in bounds:
            counts, ll = _block_counts(trellis, sents[lo:hi], shape)
            acc.add_block(i, counts, ll)
    return acc


def m_step(acc: PosteriorAccumulator, tau: float, src_vocab_size: int | None = None,
           tgt_vocab_size: int | None = None, lam: float = 1.0,
           backoff: BackoffModel | None = None) -> SparseLexicon:
    """Relative frequencies of expected counts per target word, then thresholding.

    Target words without expected counts get no row.
    """
    if len(acc) == 0:
        raise ValueError("empty accumulator")
    tgt = tgt_vocab_size if tgt_vocab_size is not None else acc.shape[0]
    src = src_vocab_size if src_vocab_size is not None else acc.shape[1]
    if (tgt, src) != acc.shape:
        raise ValueError("vocabulary sizes disagree with the accumulator")
    table = threshold_table(acc.counts(), tau)
    return SparseLexicon(table, src, tgt, tau, lam, backoff)


def _remap(corpus: Corpus, vocab) -> Corpus:
    if corpus.vocab == vocab:
        return corpus
    table = np.array([vocab.id(w) for w in corpus.vocab.words], dtype=np.int64)
    return Corpus(tuple(table[s] for s in corpus.sentences), vocab, corpus.side)


def train(task: MonotoneTask | Corpus, lm: NGramLM, config: TrainConfig,
          init_lex: SparseLexicon | None = None, reference: Corpus | None = None,
          callback: Callable[[int, SparseLexicon, IterationRecord], None] | None = None,
          ) -> tuple[SparseLexicon, TrainStats]:
    """Run EM for ``config.iterations`` iterations.

    ``task`` is a MonotoneTask (its reference is used for accuracy tracking)
    or a bare source corpus.
    """
    from .decoder import decode_corpus
    from .evaluation import token_accuracy

    if isinstance(task, MonotoneTask):
        source = task.source_input
        reference = reference if reference is not None else task.reference
    else:
        source = task
    V_src, V_tgt = len(source.vocab), len(lm.vocab)
    if init_lex is None:
        init_lex = init_uniform(V_src, V_tgt, 0.0, config.lam)
    if init_lex.tgt_vocab_size != V_tgt:
        raise ValueError(f"lexicon target size {init_lex.tgt_vocab_size} != LM vocabulary size {V_tgt}")
    if init_lex.src_vocab_size != V_src:
        raise ValueError(f"lexicon source size {init_lex.src_vocab_size} != source vocabulary size {V_src}")
    stats = TrainStats()
    if config.iterations == 0:
        return init_lex, stats
    if reference is not None:
        reference = _remap(reference, lm.vocab)

    backoff = BackoffModel.build(config.backoff, source, V_src)
    lex = init_lex.with_config(lam=config.lam, backoff=backoff)
    lm_cache = LMStateCache(lm, config.lm_beam)
    prev = None
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        acc = e_step(source, lex, lm, config, lm_cache)
        lex = m_step(acc, config.tau, V_src, V_tgt, config.lam, backoff)
        ll = acc.loglik
        accuracy = None
        last = it == config.iterations
        if reference is not None and config.eval_every and (it % config.eval_every == 0 or last):
            hyp = decode_corpus(source, lex, lm, config.search, lm_cache=lm_cache)
            accuracy = token_accuracy(hyp, reference)
        rec = IterationRecord(it, ll, lex.active_fraction(), accuracy, time.perf_counter() - t0)
        stats.records.append(rec)
        log.info("iteration %d loglik %.6f active %.5f%s", it, ll, rec.active_fraction,
                 "" if accuracy is None else f" accuracy {accuracy:.4f}")
        if callback is not None:
            callback(it, lex, rec)
        if config.checkpoint_every and config.checkpoint_dir and it % config.checkpoint_every == 0:
            d = Path(config.checkpoint_dir)
            d.mkdir(parents=True, exist_ok=True)
            lex.write_tsv(d / f"lexicon.iter{it}.tsv", source.vocab, lm.vocab)
        if config.convergence_rel_tol is not None and prev is not None and prev != 0:
            if abs(ll - prev) / abs(prev) < config.convergence_rel_tol:
                break
        prev = ll
    return lex, stats
