"""Viterbi decoding of source text into target words."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus
from .lexicon import SparseLexicon
from .ngram import NGramLM
from .trellis import LexiconCache, LMStateCache, SearchConfig, Trellis


def viterbi_decode(sentence, lex: SparseLexicon, lm: NGramLM, histogram_beam: int | None = None,
                   lex_beam: int | None = None, lm_beam: int | None = None) -> np.ndarray:
    """Best target sequence for ``sentence``; exact when every beam is unbounded."""
    return viterbi_with_score(sentence, lex, lm, SearchConfig(histogram_beam, lex_beam, lm_beam))[0]


def viterbi_with_score(sentence, lex: SparseLexicon, lm: NGramLM, search: SearchConfig | None = None):
    search = search or SearchConfig()
    sentence = np.asarray(sentence)
    if sentence.size == 0:
        raise ValueError("empty sentence")
    lmc = LMStateCache(lm, search.lm_beam)
    lexc = LexiconCache(lex, lmc.hidden, search.lex_beam)
    return Trellis(lexc, lmc, search).viterbi(sentence)


def decode_corpus(source: Corpus, lex: SparseLexicon, lm: NGramLM, search: SearchConfig | None = None,
                  lm_cache: LMStateCache | None = None) -> Corpus:
    """Decode every sentence; empty sentences stay empty."""
    search = search or SearchConfig()
    lmc = lm_cache if lm_cache is not None else LMStateCache(lm, search.lm_beam)
    trellis = Trellis(LexiconCache(lex, lmc.hidden, search.lex_beam), lmc, search)
    out = []
    for sent in source:
        out.append(trellis.viterbi(sent)[0] if sent.size else np.zeros(0, dtype=np.int64))
    return Corpus(tuple(out), lm.vocab, "target")
