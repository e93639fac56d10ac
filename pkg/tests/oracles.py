"""Independent reference implementations used to cross-check the package.

Written with plain Python loops and math so they share no code path with
the vectorised implementations under test.
"""

import math
from fractions import Fraction
from itertools import combinations


def pair_sim(x, y, alpha=0.05):
    return math.exp(-alpha * math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(x, y))))


def matched(frames, others, rho, alpha=0.05):
    """Frames of ``frames`` with some frame of ``others`` strictly above rho."""
    return sum(1 for x in frames if any(pair_sim(x, y, alpha) > rho for y in others))


def main_view_scores(buffers, rho, alpha=0.05):
    """Every non-empty proper subset (as a sorted tuple) mapped to its exact score, or None when it holds no frames."""
    n = len(buffers)
    scores = {}
    for size in range(1, n):
        for subset in combinations(range(n), size):
            kept = sum(len(buffers[j]) for j in subset)
            if kept == 0:
                scores[subset] = None
                continue
            union = [f for j in subset for f in buffers[j]]
            hits = sum(matched(buffers[i], union, rho, alpha) for i in range(n) if i not in subset)
            scores[subset] = Fraction(hits, kept)
    return scores


def main_view_optimum(buffers, rho, alpha=0.05):
    """(best score, set of optimal subsets)."""
    scores = {s: v for s, v in main_view_scores(buffers, rho, alpha).items() if v is not None}
    best = max(scores.values())
    return best, {s for s, v in scores.items() if v == best}


def gaussian_bumps(binary, w=4, sigma=1.0):
    out = [0.0] * len(binary)
    for i, b in enumerate(binary):
        if b:
            for t in range(max(0, i - w), min(len(binary), i + w + 1)):
                out[t] = max(out[t], math.exp(-((t - i) ** 2) / (2 * sigma * sigma)))
    return out
