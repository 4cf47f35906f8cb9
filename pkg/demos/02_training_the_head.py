"""
Training the match head
=======================

A constructed corpus where a resume matches a job exactly when it mentions
the job's skill.  We check the analytic gradients against finite
differences, then train with early stopping on validation F1.
"""

# %%
import numpy as np

from matchforge import metrics
from matchforge.corpus import stratified_split
from matchforge.embed import EncoderVariant
from matchforge.matchnet import (FeatureCache, MatchModel, TrainConfig, evaluate_pairs, loss_and_grads,
                                 one_hot, train)
from matchforge.synthetic import separable_corpus
from matchforge.textpipe import plan_chunks, tokenize

docs, pairs = separable_corpus(500, seed=0)
split = stratified_split(pairs, seed=0)
print(len(split.train), len(split.validation), len(split.test))

lengths = [len(tokenize(d.text)) for d in docs.values()]
plan = plan_chunks(lengths, lengths, 512, 50, 0.10)
print(plan)

# %%
# Gradient check on a small batch: central differences, step 1e-5.
model = MatchModel.init(EncoderVariant.TRAINABLE_BAG, d=8, buckets=256, seed=0)
features = FeatureCache(docs, plan, model.encoder)
jw, rw, q = features.batch(split.train[:4])
_, grads = loss_and_grads(model, jw, rw, q)

h = 1e-5
for name, tensor in model.tensors().items():
    idx = tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(grads[name])), tensor.shape))
    old = tensor[idx]
    tensor[idx] = old + h
    up = loss_and_grads(model, jw, rw, q)[0]
    tensor[idx] = old - h
    down = loss_and_grads(model, jw, rw, q)[0]
    tensor[idx] = old
    print(f"{name:9s} analytic={grads[name][idx]: .6e} numeric={(up - down) / (2 * h): .6e}")

# %%
config = TrainConfig(learning_rate=0.1, batch_size=4, max_epochs=200, patience=20, seed=0)
result = train(split, plan, model, config, docs)
print("epochs run:", len(result.log), "best epoch:", result.best_epoch)
for row in result.log[::10]:
    print(f"{row.epoch:4d} train={row.train_loss:.4f} val={row.val_loss:.4f} f1={row.val_f1:.3f}")

# %%
_, counts = evaluate_pairs(result.model, FeatureCache(docs, plan, result.model.encoder), split.test)
stats = metrics.confusion_stats(counts)
print(counts)
print(f"test accuracy={stats.accuracy:.3f} f1={stats.f1:.3f}")
