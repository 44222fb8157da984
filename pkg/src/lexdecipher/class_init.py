"""Lexicon initialization from a class-to-class lexicon.

Recipe: cluster both sides, rewrite the corpora as class sequences, train a
full class lexicon against a class LM, expand it back to words and threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

from .classes import ClassMap, map_corpus
from .corpus import Corpus, MonotoneTask
from .em import TrainConfig, TrainStats, train
from .lexicon import BackoffModel, SparseLexicon, class_to_word_lexicon
from .ngram import NGramLM, train_ngram_lm


@dataclass
class ClassInitResult:
    word_lexicon: SparseLexicon
    class_lexicon: SparseLexicon
    class_lm: NGramLM
    stats: TrainStats


def init_from_word_classes(
    task: MonotoneTask | Corpus,
    c_src: ClassMap,
    c_tgt: ClassMap,
    tau: float,
    class_lm_order: int = 4,
    iterations: int = 50,
    lam: float = 1.0,
    backoff: BackoffModel | None = None,
    histogram_beam: int | None = 50,
    workers: int = 1,
    lm_text: Corpus | None = None,
) -> ClassInitResult:
    """Train a class lexicon on ``task`` and convert it into a word lexicon.

    ``task`` is a MonotoneTask or a bare source corpus; in the latter case
    ``lm_text`` supplies the target text.

    The class lexicon is a full table (no threshold, no smoothing); only the
    trellis is pruned, by ``histogram_beam``, because high-order class LMs
    have many states.
    """
    if isinstance(task, MonotoneTask):
        source, lm_text = task.source_input, task.lm_text
    elif lm_text is None:
        raise ValueError("lm_text is required with a bare source corpus")
    else:
        source = task
    if len(c_src) != len(source.vocab) or len(c_tgt) != len(lm_text.vocab):
        raise ValueError("class maps do not cover the task vocabularies")
    src_classes = map_corpus(source, c_src)
    lm_classes = map_corpus(lm_text, c_tgt)
    class_lm = train_ngram_lm(lm_classes, class_lm_order)
    cfg = TrainConfig.exact(iterations=iterations, histogram_beam=histogram_beam, workers=workers)
    class_lex, stats = train(src_classes, class_lm, cfg)
    word_lex = class_to_word_lexicon(class_lex, c_src, c_tgt, tau, lam, backoff)
    return ClassInitResult(word_lex, class_lex, class_lm, stats)
