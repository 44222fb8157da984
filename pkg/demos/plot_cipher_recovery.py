"""
Recovering a substitution cipher with EM
========================================

A random bigram Markov chain produces "target language" text. The first part
is enciphered word by word; the rest trains a bigram LM. EM then learns the
lexicon p(f|e) from the ciphertext alone.
"""

import time

import numpy as np

from lexdecipher import (TrainConfig, decode_corpus, generate_markov_text, generate_synthetic_cipher,
                         token_accuracy, train, train_ngram_lm)

text = generate_markov_text(num_types=50, num_tokens=40_000, seed=0)
cut = int(np.searchsorted(np.cumsum(text.lengths), 4000)) + 1
task = generate_synthetic_cipher(text, seed=0, split_fraction=(cut + 0.5) / len(text))
print(f"input tokens: {task.source_input.num_tokens}, LM tokens: {task.lm_text.num_tokens}")
print("first enciphered sentence:", " ".join(task.source_input.tokens()[0][:12]), "...")

lm = train_ngram_lm(task.lm_text, order=2)

# %%
# Pruned, thresholded training with backoff smoothing. Accuracy is tracked
# every 5 iterations against the hidden plaintext.
config = TrainConfig(iterations=25, tau=1e-4, lam=0.15, histogram_beam=50, lex_beam=5, lm_beam=50,
                     eval_every=5)
t0 = time.time()
lexicon, stats = train(task, lm, config)
for rec in stats:
    if rec.accuracy is not None:
        print(f"iter {rec.iteration:3d}  loglik {rec.loglik:12.2f}  active {rec.active_fraction:6.1%}  "
              f"acc {rec.accuracy:.3f}")
print(f"{time.time() - t0:.1f}s")

# %%
# The learned lexicon should put almost all mass on the true key.
key = task.meta["key"]
n = task.tgt_vocab.regular_ids.size
best = np.array([lexicon.row_dense(e).argmax() for e in range(n)])
print(f"rows whose argmax is the true cipher symbol: {np.mean(best == key[:n]):.2%}")

hyp = decode_corpus(task.source_input, lexicon, lm, config.search)
print("decoded:  ", " ".join(hyp.tokens()[0][:12]))
print("reference:", " ".join(task.reference.tokens()[0][:12]))
print("token accuracy:", round(token_accuracy(hyp, task.reference), 4))
