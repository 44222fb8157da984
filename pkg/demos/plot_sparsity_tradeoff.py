"""
How much of the lexicon do we need?
===================================

A homophonic cipher gives each plaintext word two cipher symbols, so the
true lexicon has two entries per row. We train with several thresholds and
compare accuracy against the share of the table that is materialized.
"""

import numpy as np

from lexdecipher import (TrainConfig, decode_corpus, generate_markov_text, generate_synthetic_cipher,
                         token_accuracy, train, train_ngram_lm)

text = generate_markov_text(num_types=40, num_tokens=30_000, seed=1)
cut = int(np.searchsorted(np.cumsum(text.lengths), 3000)) + 1
task = generate_synthetic_cipher(text, seed=1, split_fraction=(cut + 0.5) / len(text), ambiguity=0.3)
lm = train_ngram_lm(task.lm_text, order=2)
print(f"{len(task.src_vocab)} source types, {len(task.tgt_vocab)} target types")

print(f"{'tau':>8}  {'accuracy':>8}  {'active':>7}")
for tau in (0.0, 1e-3, 1e-2, 5e-2):
    cfg = TrainConfig(iterations=20, tau=tau, lam=0.15)
    lex, _ = train(task, lm, cfg)
    acc = token_accuracy(decode_corpus(task.source_input, lex, lm, cfg.search), task.reference)
    print(f"{tau:8g}  {acc:8.3f}  {lex.active_fraction():7.1%}")

# %%
# Thresholding drops most entries without hurting accuracy: the posteriors
# concentrate on few candidates, so the small entries were noise anyway.
