"""Unsupervised EM training of sparse word lexicons for monotone decipherment."""

from .class_init import ClassInitResult, init_from_word_classes
from .classes import ClassMap, class_bigram_loglik, cluster_exchange, map_corpus
from .corpus import (
    BOS,
    EOS,
    UNK,
    Corpus,
    MonotoneTask,
    Vocabulary,
    build_monotone_task,
    build_vocabulary,
    generate_markov_text,
    generate_synthetic_cipher,
)
from .decoder import decode_corpus, viterbi_decode
from .em import PosteriorAccumulator, TrainConfig, TrainStats, e_step, forward_backward, m_step, train
from .evaluation import token_accuracy
from .lexicon import (
    BackoffModel,
    LexiconRow,
    SparseLexicon,
    active_fraction,
    class_to_word_lexicon,
    init_uniform,
    smoothed_prob,
    threshold_renormalize,
)
from .ngram import ArpaError, LMState, NGramLM, read_arpa, score, train_ngram_lm, write_arpa
from .trellis import SearchConfig, ZeroProbabilityError, preselect

__version__ = "0.1.0"
