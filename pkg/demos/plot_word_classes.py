"""
Word classes and class-based initialization
===========================================

Exchange clustering groups words with similar neighbours. A class-to-class
lexicon trained on class sequences is then expanded into a word lexicon
that can seed word-level EM.
"""

import numpy as np

from lexdecipher import (TrainConfig, cluster_exchange, decode_corpus, generate_markov_text,
                         generate_synthetic_cipher, init_from_word_classes, token_accuracy, train,
                         train_ngram_lm)

text = generate_markov_text(num_types=30, num_tokens=20_000, seed=4)
task = generate_synthetic_cipher(text, seed=4, split_fraction=0.15)

c_tgt, trace = cluster_exchange(task.lm_text, K=6, return_trace=True)
print("class bigram objective per sweep:", np.round(trace, 1))
c_src = cluster_exchange(task.source_input, K=6)
for c in range(3):
    print(f"target class {c}:", [task.tgt_vocab.words[w] for w in c_tgt.members(c)])

# %%
# Train the class lexicon, expand it and threshold. Words in one target
# class share their row.
res = init_from_word_classes(task, c_src, c_tgt, tau=1e-3, class_lm_order=3, iterations=20)
print("class-level loglik:", round(res.stats.logliks[-1], 1))
print("word lexicon active fraction:", f"{res.word_lexicon.active_fraction():.1%}")

# %%
# Continue at the word level from the class initialization.
lm = train_ngram_lm(task.lm_text, order=2)
cfg = TrainConfig(iterations=15, tau=1e-4, lam=0.5)
for name, init in (("uniform", None), ("classes", res.word_lexicon)):
    lex, _ = train(task, lm, cfg, init_lex=init)
    acc = token_accuracy(decode_corpus(task.source_input, lex, lm, cfg.search), task.reference)
    print(f"init={name:8s} accuracy {acc:.3f}")
