"""
From raw text to document vectors
=================================

Tokenize a resume, plan how many overlapping windows each role gets, cut the
windows and average their embeddings into one vector per document.
"""

# %%
import numpy as np

from matchforge.embed import EncoderParams, doc_embedding, embed_chunk
from matchforge.textpipe import capacity, choose_k, chunk, corpus_loss, tokenize

text = "Développeuse C++ et Java. 5 ans d'expérience en C++, maîtrise de l'anglais."
tokens = tokenize(text)
print(tokens.tokens)

# %%
# Window capacity grows by ``window - overlap`` per extra slot.
for k in (1, 2, 3):
    print(k, capacity(k, 512, 50))

# The planner picks the smallest slot count whose truncation loss stays
# under the budget.  One 1200-token resume needs three windows.
lengths = [1200]
for k in (1, 2, 3):
    print(f"k={k} loss={corpus_loss(lengths, k):.3f}")
print("chosen:", choose_k(lengths, loss_threshold=0.10))

# %%
# Overlapping windows share exactly ``overlap`` tokens.
long_doc = [f"t{i}" for i in range(600)]
parts = chunk(long_doc, k=2, window=512, overlap=50)
print([len(c) for c in parts.chunks], "dropped:", parts.dropped)
print("shared:", len(set(parts.chunks[0]) & set(parts.chunks[1])))

# %%
# Feature hashing: L2-normalized bucket counts, the same on every machine.
hashed = EncoderParams.feature_hash(d=16)
v = embed_chunk(tokens.tokens, hashed)
print(np.round(v, 3), np.linalg.norm(v))

# Trainable bag: mean of table rows, so its gradient flows into the table.
bag = EncoderParams.trainable_bag(d=4, buckets=64, seed=0)
chunks = chunk(tokens.tokens, k=2, window=10, overlap=2).chunks
doc = doc_embedding([embed_chunk(c, bag) for c in chunks])
print(len(chunks), "chunks ->", np.round(doc, 4))
