"""Pruned trellis search shared by forward-backward and Viterbi.

A trellis node at position n is an LM state (a recombined history); an edge
from state s to the state reached after hypothesizing target word e at n has
weight log p(e|s) + log p(f_n|e). Candidate words per edge come from
preselection, and each position keeps at most ``histogram_beam`` states.

Beams use ``None`` for "unbounded".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lexicon import SparseLexicon
from .ngram import LMState, NGramLM


class ZeroProbabilityError(RuntimeError):
    """Every path through the (pruned) trellis has probability zero."""


def top_k_mask(scores: np.ndarray, k: int | None, allowed: np.ndarray) -> np.ndarray:
    """Boolean mask of the ``k`` best allowed entries; ties go to lower ids."""
    if k is None or k >= int(allowed.sum()):
        return allowed.copy()
    mask = np.zeros(scores.size, dtype=bool)
    if k <= 0:
        return mask
    s = np.where(allowed, scores, -np.inf)
    thr = np.partition(s, s.size - k)[s.size - k]
    above = s > thr
    mask |= above
    need = k - int(above.sum())
    if need > 0:
        ties = np.nonzero(s == thr)[0][:need]
        mask[ties] = True
    return mask


def hidden_mask(lm: NGramLM) -> np.ndarray:
    """Target words that may be hypothesized: everything but <s> and </s>."""
    m = np.ones(len(lm.vocab), dtype=bool)
    m[lm.vocab.bos] = False
    m[lm.vocab.eos] = False
    return m


class LMStateCache:
    """Per-state LM score rows, successor-state rows and LM preselection masks.

    Rows are computed on first use and kept in growable 2-D pools so that
    edge scores can be gathered with one fancy-indexing call.
    """

    def __init__(self, lm: NGramLM, lm_beam: int | None = None):
        self.lm = lm
        self.lm_beam = lm_beam
        self.hidden = hidden_mask(lm)
        V = len(lm.vocab)
        self._row_of = np.full(len(lm.contexts), -1, dtype=np.int64)
        cap = min(len(lm.contexts), 64)
        self.logp = np.empty((cap, V))
        self.next = np.empty((cap, V), dtype=np.int64)
        self.mask = np.empty((cap, V), dtype=bool)
        self.size = 0

    def _grow(self):
        cap = 2 * self.logp.shape[0]
        for name in ("logp", "next", "mask"):
            old = getattr(self, name)
            new = np.empty((cap, old.shape[1]), dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def rows(self, states: np.ndarray) -> np.ndarray:
        r = self._row_of[states]
        missing = np.nonzero(r < 0)[0]
        for i in missing:
            s = int(states[i])
            if self._row_of[s] >= 0:
                continue
            if self.size == self.logp.shape[0]:
                self._grow()
            h = self.lm.contexts[s]
            vec = self.lm.log_prob_vector(h)
            self.logp[self.size] = vec
            self.next[self.size] = self.lm.next_state_vector(h)
            self.mask[self.size] = top_k_mask(vec, self.lm_beam, self.hidden)
            self._row_of[s] = self.size
            self.size += 1
        return self._row_of[states]


class LexiconCache:
    """Per-source-word log columns and lexical preselection masks."""

    def __init__(self, lex: SparseLexicon, hidden: np.ndarray, lex_beam: int | None = None):
        if lex.tgt_vocab_size != hidden.size:
            raise ValueError("lexicon and LM disagree on the target vocabulary size")
        self.lex = lex
        self.lex_beam = lex_beam
        self.hidden = hidden
        self._cols: dict[int, np.ndarray] = {}
        self._masks: dict[int, np.ndarray] = {}

    def logcol(self, f: int) -> np.ndarray:
        c = self._cols.get(f)
        if c is None:
            with np.errstate(divide="ignore"):
                c = np.log(self.lex.column(f))
            self._cols[f] = c
        return c

    def mask(self, f: int) -> np.ndarray:
        m = self._masks.get(f)
        if m is None:
            m = top_k_mask(self.logcol(f), self.lex_beam, self.hidden)
            self._masks[f] = m
        return m


def preselect(f: int, lm_state: LMState, lex: SparseLexicon, lm: NGramLM,
              lex_beam: int | None, lm_beam: int | None) -> set[int]:
    """Union of the best lexical translations of ``f`` and the best LM continuations."""
    hidden = hidden_mask(lm)
    lexc = LexiconCache(lex, hidden, lex_beam)
    lmc = LMStateCache(lm, lm_beam)
    ctx = lm.context_index[lm.recombine(lm_state.history)]
    row = lmc.rows(np.array([ctx]))[0]
    return set(np.nonzero(lexc.mask(int(f)) | lmc.mask[row])[0].tolist())


@dataclass
class SearchConfig:
    histogram_beam: int | None = None
    lex_beam: int | None = None
    lm_beam: int | None = None

    @property
    def preselecting(self) -> bool:
        return self.lex_beam is not None and self.lm_beam is not None


def _segment_logsumexp(x: np.ndarray, seg: np.ndarray, n: int) -> np.ndarray:
    m = np.full(n, -np.inf)
    np.maximum.at(m, seg, x)
    safe = np.where(np.isfinite(m), m, 0.0)
    s = np.bincount(seg, weights=np.exp(x - safe[seg]), minlength=n)
    with np.errstate(divide="ignore"):
        return safe + np.log(s)


def _group(keys: np.ndarray, bound: int) -> tuple[np.ndarray, np.ndarray]:
    """``np.unique(keys, return_inverse=True)`` for keys in ``[0, bound)``."""
    if bound > 8 * keys.size:
        return np.unique(keys, return_inverse=True)
    present = np.zeros(bound, dtype=bool)
    present[keys] = True
    uniq = np.flatnonzero(present)
    lookup = np.empty(bound, dtype=np.int64)
    lookup[uniq] = np.arange(uniq.size)
    return uniq, lookup[keys]


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(x - m))))


@dataclass
class _Layer:
    k: np.ndarray        # source node index (into previous layer)
    word: np.ndarray     # hypothesized target word
    trans: np.ndarray    # edge log weight
    dst: np.ndarray      # destination node index (into this layer)
    alpha_prev: np.ndarray


class Trellis:
    """Search space for one source sentence under fixed lexicon and LM caches."""

    def __init__(self, lexc: LexiconCache, lmc: LMStateCache, config: SearchConfig):
        self.lexc = lexc
        self.lmc = lmc
        self.config = config
        lm = lmc.lm
        self.init_state = lm.context_index[lm.initial_state().history]
        self.eos = lm.vocab.eos
        self.n_states = len(lm.contexts)
        self.n_words = len(lm.vocab)

    def _edges(self, states: np.ndarray, f: int):
        rows = self.lmc.rows(states)
        if self.config.preselecting:
            cand = self.lmc.mask[rows] | self.lexc.mask(f)
            cand &= self.lmc.hidden
        else:
            # an unbounded beam on either side saturates the union
            cand = np.broadcast_to(self.lmc.hidden, (states.size, self.lmc.hidden.size))
        k, w = np.nonzero(cand)
        r = rows[k]
        trans = self.lmc.logp[r, w] + self.lexc.logcol(f)[w]
        nxt = self.lmc.next[r, w]
        return k, w, trans, nxt

    def _prune(self, uniq: np.ndarray, score: np.ndarray) -> np.ndarray | None:
        B = self.config.histogram_beam
        if B is None or uniq.size <= B:
            return None
        order = np.lexsort((uniq, -score))[:B]
        return np.sort(order)

    def forward(self, src) -> tuple[list[_Layer], np.ndarray, np.ndarray, np.ndarray]:
        """Layers of retained edges, final states, their forward scores and end scores."""
        states = np.array([self.init_state], dtype=np.int64)
        alpha = np.zeros(1)
        layers = []
        for n, f in enumerate(np.asarray(src).tolist()):
            k, w, trans, nxt = self._edges(states, f)
            sc = alpha[k] + trans
            ok = np.isfinite(sc)
            if not ok.all():
                k, w, trans, nxt, sc = k[ok], w[ok], trans[ok], nxt[ok], sc[ok]
            if k.size == 0:
                raise ZeroProbabilityError(f"no finite-probability hypothesis at position {n + 1}")
            uniq, inv = _group(nxt, self.n_states)
            a_new = _segment_logsumexp(sc, inv, uniq.size)
            sel = self._prune(uniq, a_new)
            if sel is not None:
                remap = np.full(uniq.size, -1, dtype=np.int64)
                remap[sel] = np.arange(sel.size)
                dst = remap[inv]
                keep = dst >= 0
                k, w, trans, dst = k[keep], w[keep], trans[keep], dst[keep]
                uniq, a_new = uniq[sel], a_new[sel]
            else:
                dst = inv
            layers.append(_Layer(k, w, trans, dst, alpha))
            states, alpha = uniq, a_new
        end = self.lmc.logp[self.lmc.rows(states), self.eos]
        return layers, states, alpha, end

    def posteriors(self, src) -> tuple[list[tuple[np.ndarray, np.ndarray]], float]:
        """Per-position posterior over target words and the total log mass."""
        layers, _, alpha, end = self.forward(src)
        Z = _logsumexp(alpha + end)
        if not math.isfinite(Z):
            raise ZeroProbabilityError("sentence has zero probability under the model")
        beta = end
        out = [None] * len(layers)
        for n in range(len(layers) - 1, -1, -1):
            L = layers[n]
            lp = L.alpha_prev[L.k] + L.trans + beta[L.dst]
            z = _logsumexp(lp)
            words, inv = _group(L.word, self.n_words)
            probs = np.bincount(inv, weights=np.exp(lp - z), minlength=words.size)
            out[n] = (words, probs)
            beta = _segment_logsumexp(L.trans + beta[L.dst], L.k, L.alpha_prev.size)
        return out, Z

    def viterbi(self, src) -> tuple[np.ndarray, float]:
        states = np.array([self.init_state], dtype=np.int64)
        delta = np.zeros(1)
        back = []
        for n, f in enumerate(np.asarray(src).tolist()):
            k, w, trans, nxt = self._edges(states, f)
            sc = delta[k] + trans
            ok = np.isfinite(sc)
            if not ok.all():
                k, w, nxt, sc = k[ok], w[ok], nxt[ok], sc[ok]
            if k.size == 0:
                raise ZeroProbabilityError(f"no finite-probability hypothesis at position {n + 1}")
            uniq, inv = _group(nxt, self.n_states)
            order = np.lexsort((k, w, -sc, inv))
            inv_sorted = inv[order]
            first = order[np.concatenate([[0], np.nonzero(np.diff(inv_sorted))[0] + 1])]
            d_new = sc[first]
            bp_k, bp_w = k[first], w[first]
            sel = self._prune(uniq, d_new)
            if sel is not None:
                uniq, d_new, bp_k, bp_w = uniq[sel], d_new[sel], bp_k[sel], bp_w[sel]
            back.append((bp_k, bp_w))
            states, delta = uniq, d_new
        final = delta + self.lmc.logp[self.lmc.rows(states), self.eos]
        best = int(np.argmax(final))
        score = float(final[best])
        out = np.empty(len(back), dtype=np.int64)
        node = best
        for n in range(len(back) - 1, -1, -1):
            bp_k, bp_w = back[n]
            out[n] = bp_w[node]
            node = bp_k[node]
        return out, score

