"""Token-level accuracy of a hypothesis against a token-parallel reference."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus


def token_accuracy(hyp, ref) -> float:
    """Fraction of positions where hypothesis and reference agree, pooled over sentences.

    Both arguments are Corpus objects or sequences of id/token sequences.
    """
    return accuracy_counts(hyp, ref)[0]


def accuracy_counts(hyp, ref) -> tuple[float, int]:
    hs = hyp.sentences if isinstance(hyp, Corpus) else list(hyp)
    rs = ref.sentences if isinstance(ref, Corpus) else list(ref)
    if len(hs) != len(rs):
        raise ValueError(f"hypothesis has {len(hs)} sentences, reference {len(rs)}")
    correct = total = 0
    for k, (h, r) in enumerate(zip(hs, rs)):
        h, r = np.asarray(h), np.asarray(r)
        if h.size != r.size:
            raise ValueError(f"sentence {k + 1}: hypothesis length {h.size} != reference length {r.size}")
        correct += int(np.count_nonzero(h == r))
        total += r.size
    if total == 0:
        raise ValueError("no tokens to score")
    return correct / total, total


def format_report(accuracy: float, tokens: int) -> str:
    return f"accuracy={accuracy!r} tokens={tokens}"
