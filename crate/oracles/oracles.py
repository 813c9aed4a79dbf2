"""Independent reference computations for the values frozen into the Rust tests.

Run with `python3 oracles/oracles.py`; prints each value with full precision.
Deliberately naive: no shared code with the Rust implementation.
"""
import itertools
import math
from fractions import Fraction


def cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    return dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))


def softmax(logits, t):
    e = [math.exp(z / t) for z in logits]
    s = sum(e)
    return [x / s for x in e]


def schedule(t0, k):
    return [t0 + (1 - t0) / k * i for i in range(k)]


def auc_pairwise(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = Fraction(0)
    for p, n in itertools.product(pos, neg):
        wins += 1 if p > n else Fraction(1, 2) if p == n else 0
    return wins / (len(pos) * len(neg))


def balanced_accuracy(tp, fn, tn, fp):
    return (Fraction(tp, tp + fn) + Fraction(tn, tn + fp)) / 2


def calibrate(similar, dissimilar):
    """Sweeps every gap between consecutive distinct values; best balanced
    accuracy, then widest gap, then lowest; returns the gap midpoint."""
    values = sorted(set(similar) | set(dissimilar))
    best = None
    for lo, hi in zip(values, values[1:]):
        tau = (lo + hi) / 2
        tpr = sum(s >= tau for s in similar) / len(similar)
        tnr = sum(d < tau for d in dissimilar) / len(dissimilar)
        key = ((tpr + tnr) / 2, hi - lo, -lo)
        if best is None or key > best[0]:
            best = (key, tau)
    return best[1], best[0][0]


def fnv1a64(data: bytes):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) % (1 << 64)
    return h


if __name__ == "__main__":
    print("cosine([1,2,3],[4,5,6]) =", repr(cosine([1, 2, 3], [4, 5, 6])))
    print("schedule(0.6, 5) =", schedule(0.6, 5))
    print("softmax([1,0], 1) =", softmax([1, 0], 1.0))
    s = [0.9, 0.1, 0.4, 0.4, 0.75, 0.3, 0.6, 0.2]
    l = [True, False, True, False, True, False, False, True]
    print("auc(8-point fixture) =", float(auc_pairwise(s, l)))
    print("balanced_accuracy(TP=3,FN=1,TN=2,FP=2) =", float(balanced_accuracy(3, 1, 2, 2)))
    print("calibrate(separable) =", calibrate([0.95] * 5, [0.5] * 5))
    print("calibrate(overlapping) =",
          calibrate([0.97, 0.93, 0.90, 0.88, 0.80], [0.85, 0.70, 0.60, 0.89, 0.50]))
    print("fnv1a64(b'') =", hex(fnv1a64(b"")), " fnv1a64(b'a') =", hex(fnv1a64(b"a")))
