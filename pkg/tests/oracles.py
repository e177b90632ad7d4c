"""Brute-force reference implementations in pure Python, for cross-checking."""

import math


def median_oracle(vs):
    out = []
    for j in range(len(vs[0])):
        col = sorted(v[j] for v in vs)
        k = len(col)
        out.append(col[k // 2] if k % 2 else (col[k // 2 - 1] + col[k // 2]) / 2)
    return out


def trimmed_oracle(vs, k):
    out = []
    for j in range(len(vs[0])):
        col = sorted(v[j] for v in vs)
        kept = col[k : len(col) - k]
        acc = 0.0
        for x in kept:
            acc = acc + (1.0 / len(kept)) * x
        out.append(acc)
    return out


def krum_oracle(vs, f, m):
    """Every pairwise distance, explicit neighbour lists, ties to the lower index."""
    k = len(vs)
    sq = [[sum((a - b) ** 2 for a, b in zip(vs[i], vs[j])) for j in range(k)] for i in range(k)]
    scores = []
    for i in range(k):
        near = sorted(sq[i][j] for j in range(k) if j != i)[: k - f - 2]
        scores.append(math.fsum(near))
    order = sorted(range(k), key=lambda i: (scores[i], i))
    chosen = sorted(order[:m])
    acc = [0.0] * len(vs[0])
    for i in chosen:
        acc = [a + (1.0 / m) * x for a, x in zip(acc, vs[i])]
    return chosen, (list(vs[chosen[0]]) if m == 1 else acc)
