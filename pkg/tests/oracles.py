"""Reference implementations written straight from the textbook formulas.

They share no code with the package and favour obviousness over speed.
"""
import itertools
import math

import numpy as np


def dcg_formula(rels, n):
    return sum((2 ** rels[i - 1] - 1) / math.log2(i + 1) for i in range(1, n + 1))


def ndcg_formula(rels, n):
    # ideal ordering: best grades first, found by trying every permutation
    best = max(dcg_formula(list(p), n) for p in itertools.permutations(rels))
    return 0.0 if best == 0 else dcg_formula(rels, n) / best


def ap_formula(rels):
    relevant = sum(1 for r in rels if r > 0)
    total = 0.0
    for i in range(1, len(rels) + 1):
        if rels[i - 1] > 0:
            precision = sum(1 for r in rels[:i] if r > 0) / i
            total += precision
    return total / relevant


def mrr_formula(rel_lists):
    rr = []
    for rels in rel_lists:
        for i, r in enumerate(rels, start=1):
            if r > 0:
                rr.append(1.0 / i)
                break
    return sum(rr) / len(rr)


def jaro_reference(s1, s2):
    if s1 == s2:
        return 1.0
    if not s1 or not s2:
        return 0.0
    window = max(max(len(s1), len(s2)) // 2 - 1, 0)
    taken = [False] * len(s2)
    m1 = []
    for i, ch in enumerate(s1):
        for j in range(max(0, i - window), min(len(s2), i + window + 1)):
            if not taken[j] and s2[j] == ch:
                taken[j] = True
                m1.append(ch)
                break
    m2 = [s2[j] for j in range(len(s2)) if taken[j]]
    m = len(m1)
    if m == 0:
        return 0.0
    t = sum(a != b for a, b in zip(m1, m2)) / 2
    return (m / len(s1) + m / len(s2) + (m - t) / m) / 3


def jaro_winkler_reference(s1, s2, p=0.1, max_l=4):
    j = jaro_reference(s1, s2)
    ell = 0
    for a, b in zip(s1[:max_l], s2[:max_l]):
        if a != b:
            break
        ell += 1
    return j + ell * p * (1 - j)


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))


def numeric_grad(f, tensor, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``tensor`` (mutated in place)."""
    g = np.zeros_like(tensor)
    it = np.nditer(tensor, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = tensor[idx]
        tensor[idx] = old + h
        up = f()
        tensor[idx] = old - h
        down = f()
        tensor[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def relative_error(a, b, floor=1e-8):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def corpus_loss_scan(lengths, k, W, V):
    cap = k * W - (k - 1) * V
    return sum(max(0, L - cap) for L in lengths) / sum(lengths)
