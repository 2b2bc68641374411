"""Independent reference implementations used as test oracles.

They are deliberately slow and literal so they share no code with the
package under test.
"""

import math

import numpy as np


def random_blob(rng, h=64, w=64, n_discs=None):
    """Union of a few random discs; never empty."""
    mask = np.zeros((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n_discs or int(rng.integers(1, 5))):
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        r = rng.uniform(1, min(h, w) / 4)
        mask |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if not mask.any():
        mask[h // 2, w // 2] = True
    return mask


def boundary_scan(mask):
    """Foreground pixels with a background (or off-image) 4-neighbour."""
    h, w = mask.shape
    out = set()
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or not mask[rr, cc]:
                    out.add((r, c))
                    break
    return out


def squared_edt_brute(sites):
    """Minimum over all site pixels of the integer squared distance."""
    h, w = sites.shape
    pts = np.argwhere(sites)
    yy, xx = np.mgrid[0:h, 0:w]
    best = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
    for r, c in pts:
        d = (yy - r) ** 2 + (xx - c) ** 2
        np.minimum(best, d, out=best)
    return best


def bfm_compose(image, mask, sigma):
    """Feature map from the three oracles: boundary scan, brute EDT, Gaussian."""
    h, w = mask.shape
    sites = np.zeros((h, w), dtype=bool)
    for r, c in boundary_scan(mask):
        sites[r, c] = True
    d2 = squared_edt_brute(sites).astype(np.float64)
    return image * np.exp(-d2 / (sigma * sigma))


def metrics_formula(tp, fn, tn, fp):
    """Confusion-matrix metrics written out independently; zero denominators give 0."""
    def div(a, b):
        return a / b if b else 0.0
    sen = div(tp, tp + fn)
    spe = div(tn, tn + fp)
    den = (tp + fn) * (tp + fp) * (tn + fn) * (tn + fp)
    return {
        "sen": sen,
        "spe": spe,
        "ppv": div(tp, tp + fp),
        "npv": div(tn, tn + fn),
        "acc": div(tp + tn, tp + tn + fp + fn),
        "auc_paper": (sen + spe) / 2,
        "mcc": (tp * tn - fp * fn) / math.sqrt(den) if den else 0.0,
    }


def pairwise_auc(labels, scores):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))
