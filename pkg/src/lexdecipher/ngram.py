"""Backoff n-gram language models with interpolated Kneser-Ney smoothing.

Internally every probability is a natural log; ARPA files use log10. An
n-gram model is stored in the usual backoff form: explicit log-probabilities
for seen n-grams plus a log backoff weight per history, so queries for unseen
events recurse to shorter histories.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import BOS, EOS, SPECIALS, UNK, Corpus, Vocabulary

log = logging.getLogger(__name__)

LN10 = math.log(10.0)
ARPA_FLOOR = -99.0


class ArpaError(ValueError):
    pass


@dataclass(frozen=True)
class LMState:
    """A (possibly recombined) LM history of at most ``order - 1`` word ids."""

    history: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.history)


class NGramLM:
    """Backoff n-gram model over ``vocab``.

    ``probs[k]`` maps k-gram tuples to log p(w | h); ``bows`` maps histories to
    log backoff weights. Histories that can condition a prediction (they have
    explicit extensions or a non-zero backoff) are interned as LM states with
    the empty history at id 0.
    """

    def __init__(self, order: int, vocab: Vocabulary, probs: list[dict], bows: dict):
        if order < 1:
            raise ValueError("order must be >= 1")
        if len(probs) != order:
            raise ValueError("need one probability table per order")
        self.order = order
        self.vocab = vocab
        self.probs = probs
        self.bows = bows
        V = len(vocab)

        uni = np.full(V, -np.inf)
        for (w,), lp in probs[0].items():
            uni[w] = lp
        self.unigram = uni

        ext: dict[tuple, tuple[list, list]] = defaultdict(lambda: ([], []))
        for k in range(1, order):
            for g, lp in probs[k].items():
                words, lps = ext[g[:-1]]
                words.append(g[-1])
                lps.append(lp)
        self._extensions = {
            h: (np.array(w, dtype=np.int64), np.array(p)) for h, (w, p) in ext.items()
        }

        ctx = {h for h in self._extensions} | {h for h, b in bows.items() if b != 0.0}
        ctx = {h for h in ctx if 0 < len(h) < order}
        self.contexts: list[tuple[int, ...]] = [()] + sorted(ctx, key=lambda h: (len(h), h))
        self.context_index = {h: i for i, h in enumerate(self.contexts)}
        # prefix -> (last words, context ids) of contexts extending that prefix
        grow: dict[tuple, tuple[list, list]] = defaultdict(lambda: ([], []))
        for i, h in enumerate(self.contexts[1:], 1):
            words, ids = grow[h[:-1]]
            words.append(h[-1])
            ids.append(i)
        self._grow = {p: (np.array(w, dtype=np.int64), np.array(i, dtype=np.int64))
                      for p, (w, i) in grow.items()}

    def __repr__(self) -> str:
        counts = ", ".join(str(len(t)) for t in self.probs)
        return f"NGramLM(order={self.order}, vocab={len(self.vocab)}, ngrams=[{counts}])"

    # ------------------------------------------------------------------ queries
    def logprob(self, word: int, history: Sequence[int] = ()) -> float:
        """Natural-log p(word | history) by backoff recursion."""
        h = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        total = 0.0
        while True:
            lp = self.probs[len(h)].get(h + (word,))
            if lp is not None:
                return total + lp
            if not h:
                return total + float(self.unigram[word])
            total += self.bows.get(h, 0.0)
            h = h[1:]

    def log_prob_vector(self, history: Sequence[int] = ()) -> np.ndarray:
        """log p(w | history) for every word id w."""
        h = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        vec = self.unigram.copy()
        for j in range(1, len(h) + 1):
            ctx = h[-j:]
            bow = self.bows.get(ctx, 0.0)
            if bow:
                vec += bow
            ext = self._extensions.get(ctx)
            if ext is not None:
                vec[ext[0]] = ext[1]
        return vec

    def recombine(self, history: Sequence[int]) -> tuple[int, ...]:
        """Longest suffix of ``history`` (at most order-1 words) that is an LM state."""
        if self.order == 1:
            return ()
        h = tuple(history)[-(self.order - 1):]
        for j in range(len(h), 0, -1):
            if h[-j:] in self.context_index:
                return h[-j:]
        return ()

    def initial_state(self) -> LMState:
        return LMState(self.recombine((self.vocab.bos,)))

    def score(self, state: LMState, word: int) -> tuple[float, LMState]:
        lp = self.logprob(word, state.history)
        return lp, LMState(self.recombine(state.history + (word,)))

    def next_state_vector(self, history: Sequence[int]) -> np.ndarray:
        """Context id of ``recombine(history + (w,))`` for every word id w."""
        out = np.zeros(len(self.vocab), dtype=np.int64)
        if self.order == 1:
            return out
        h = tuple(history)[-(self.order - 1):]
        for j in range(0, min(len(h), self.order - 2) + 1):
            prefix = h[len(h) - j:]
            grow = self._grow.get(prefix)
            if grow is not None:
                out[grow[0]] = grow[1]
        return out

    def sentence_logprob(self, ids: Iterable[int]) -> float:
        """log p(sentence, </s>) conditioned on <s>."""
        state = self.initial_state()
        total = 0.0
        for w in list(ids) + [self.vocab.eos]:
            lp, state = self.score(state, int(w))
            total += lp
        return total

    def histories(self) -> list[tuple[int, ...]]:
        """Every stored history, the empty one included."""
        return list(self.contexts)


def score(lm: NGramLM, state: LMState, word: int) -> tuple[float, LMState]:
    return lm.score(state, word)


# ---------------------------------------------------------------- training
def _padded(corpus: Corpus) -> Iterable[tuple[int, ...]]:
    bos, eos = corpus.vocab.bos, corpus.vocab.eos
    for s in corpus:
        yield (bos,) + tuple(int(w) for w in s) + (eos,)


def estimate_discount(counts: Iterable[int]) -> float:
    """Count-of-counts estimate n1 / (n1 + 2 n2)."""
    cc = Counter(counts)
    n1, n2 = cc.get(1, 0), cc.get(2, 0)
    if n1 == 0:
        return 0.5
    return n1 / (n1 + 2.0 * n2)


def train_ngram_lm(text: Corpus, order: int = 3, discount="estimate") -> NGramLM:
    """Interpolated Kneser-Ney model of the given order.

    ``discount`` is ``"estimate"``, one float for every order, or a sequence
    with one float per order (unigram first). Unigrams interpolate with the
    uniform distribution over predictable words so unseen words stay positive.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if len(text) == 0:
        raise ValueError("empty corpus")
    vocab = text.vocab
    V = len(vocab)
    bos = vocab.bos
    longest = max(text.lengths) + 2
    if order > longest:
        log.warning("order %d exceeds the longest padded sentence (%d tokens)", order, longest)

    raw: list[Counter] = [Counter() for _ in range(order)]
    for sent in _padded(text):
        for k in range(1, order + 1):
            for i in range(len(sent) - k + 1):
                g = sent[i:i + k]
                if k == 1 and g[0] == bos:
                    continue
                raw[k - 1][g] += 1
    if order >= 2 and not raw[1]:
        raise ValueError("no bigrams in training text")

    # continuation counts for lower orders; n-grams starting at <s> keep raw counts
    adjusted: list[dict] = [dict() for _ in range(order)]
    adjusted[order - 1] = dict(raw[order - 1])
    for k in range(order - 1, 0, -1):
        cont: Counter = Counter()
        for g in raw[k]:
            cont[g[1:]] += 1
        adj = {}
        for g, c in raw[k - 1].items():
            adj[g] = c if g[0] == bos else cont.get(g, 0)
        adjusted[k - 1] = {g: c for g, c in adj.items() if c > 0}

    if discount == "estimate":
        discounts = [estimate_discount(adjusted[k].values()) for k in range(order)]
    elif isinstance(discount, (int, float)):
        discounts = [float(discount)] * order
    else:
        discounts = [float(d) for d in discount]
        if len(discounts) != order:
            raise ValueError("need one discount per order")
    for d in discounts:
        if not 0.0 <= d <= 1.0:
            raise ValueError("discounts must lie in [0, 1]")

    probs: list[dict] = [dict() for _ in range(order)]
    bows: dict = {}

    # unigrams
    D = discounts[0]
    a1 = adjusted[0]
    total = float(sum(a1.values()))
    n_pred = V - 1
    gamma = D * len(a1) / total
    for w in range(V):
        if w == bos:
            continue
        c = a1.get((w,), 0)
        p = max(c - D, 0.0) / total + gamma / n_pred
        probs[0][(w,)] = math.log(p)
    probs[0][(bos,)] = -math.inf

    partial = NGramLM(1, vocab, probs[:1], {})
    for k in range(2, order + 1):
        D = discounts[k - 1]
        by_hist: dict[tuple, list] = defaultdict(list)
        for g, c in adjusted[k - 1].items():
            by_hist[g[:-1]].append((g[-1], c))
        for h, items in by_hist.items():
            denom = float(sum(c for _, c in items))
            gamma = D * len(items) / denom
            for w, c in items:
                lower = partial.logprob(w, h[1:])
                p = max(c - D, 0.0) / denom + gamma * math.exp(lower)
                probs[k - 1][h + (w,)] = math.log(p)
            bows[h] = math.log(gamma) if gamma > 0 else -math.inf
        partial = NGramLM(k, vocab, probs[:k], bows)
    return partial


# ------------------------------------------------------------------- ARPA
def _fmt(x: float) -> str:
    if x == -math.inf:
        return f"{ARPA_FLOOR:g}"
    return repr(float(x))


def write_arpa(lm: NGramLM, path) -> None:
    words = lm.vocab.words
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\\data\\\n")
        for k in range(lm.order):
            fh.write(f"ngram {k + 1}={len(lm.probs[k])}\n")
        for k in range(lm.order):
            fh.write(f"\n\\{k + 1}-grams:\n")
            for g in sorted(lm.probs[k]):
                lp = lm.probs[k][g] / LN10
                line = f"{_fmt(lp)}\t{' '.join(words[w] for w in g)}"
                if g in lm.bows:
                    line += f"\t{_fmt(lm.bows[g] / LN10)}"
                fh.write(line + "\n")
        fh.write("\n\\end\\\n")


def _parse_float(tok: str, path, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ArpaError(f"{path}:{lineno}: bad number {tok!r}") from None
    return -math.inf if v <= ARPA_FLOOR else v * LN10


def read_arpa(path) -> NGramLM:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]

    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        if lines[i].strip():
            raise ArpaError(f"{path}:{i + 1}: expected \\data\\ header")
        i += 1
    if i == len(lines):
        raise ArpaError(f"{path}: missing \\data\\ header")
    i += 1
    declared: dict[int, int] = {}
    while i < len(lines) and lines[i].strip().startswith("ngram "):
        key, _, val = lines[i].strip()[6:].partition("=")
        try:
            declared[int(key)] = int(val)
        except ValueError:
            raise ArpaError(f"{path}:{i + 1}: malformed count line") from None
        i += 1
    if not declared or sorted(declared) != list(range(1, len(declared) + 1)):
        raise ArpaError(f"{path}:{i + 1}: missing or non-contiguous ngram counts")
    order = len(declared)

    raw: list[list[tuple[tuple[str, ...], float, float | None]]] = [[] for _ in range(order)]
    current = None
    ended = False
    for i in range(i, len(lines)):
        line = lines[i].strip()
        lineno = i + 1
        if not line:
            continue
        if line == "\\end\\":
            ended = True
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current = int(line[1:-7])
            except ValueError:
                raise ArpaError(f"{path}:{lineno}: bad section header") from None
            if current not in declared:
                raise ArpaError(f"{path}:{lineno}: section for undeclared order {current}")
            continue
        if current is None:
            raise ArpaError(f"{path}:{lineno}: n-gram outside a section")
        parts = line.split("\t") if "\t" in line else line.split()
        if "\t" in line:
            if len(parts) not in (2, 3):
                raise ArpaError(f"{path}:{lineno}: expected logprob, n-gram[, backoff]")
            gram = tuple(parts[1].split())
            bow = parts[2] if len(parts) == 3 else None
        else:
            if len(parts) not in (current + 1, current + 2):
                raise ArpaError(f"{path}:{lineno}: wrong field count for a {current}-gram")
            gram = tuple(parts[1:current + 1])
            bow = parts[current + 1] if len(parts) == current + 2 else None
        if len(gram) != current:
            raise ArpaError(f"{path}:{lineno}: expected a {current}-gram")
        raw[current - 1].append((gram, _parse_float(parts[0], path, lineno),
                                 None if bow is None else _parse_float(bow, path, lineno)))
    if not ended:
        raise ArpaError(f"{path}: missing \\end\\ marker")
    for k in range(order):
        if len(raw[k]) != declared[k + 1]:
            raise ArpaError(f"{path}: declared {declared[k + 1]} {k + 1}-grams, found {len(raw[k])}")

    regular = [g[0] for g, _, _ in raw[0] if g[0] not in SPECIALS]
    present = {g[0] for g, _, _ in raw[0]}
    vocab = Vocabulary(regular + list(SPECIALS))
    probs: list[dict] = [dict() for _ in range(order)]
    bows: dict = {}
    for k in range(order):
        for gram, lp, bow in raw[k]:
            try:
                ids = tuple(vocab.index[w] for w in gram)
            except KeyError as exc:
                raise ArpaError(f"{path}: n-gram {' '.join(gram)!r} uses word {exc} missing from unigrams") from None
            probs[k][ids] = lp
            if bow is not None:
                bows[ids] = bow
    if BOS not in present:
        probs[0][(vocab.bos,)] = -math.inf
    for name in (EOS, UNK):
        if name not in present:
            probs[0][(vocab.index[name],)] = ARPA_FLOOR * LN10
    return NGramLM(order, vocab, probs, bows)
