"""Independent brute-force reference implementations used as test oracles.

Everything here is written for obviousness, not speed: explicit loops,
dense kernels, textbook formulas. Production code must agree with these
on small inputs to tight tolerances.
"""
import math

import numpy as np


def dense_blur(img, sigma):
    """Full 2-D Gaussian convolution with edge-replicated borders."""
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    taps = taps / taps.sum()
    kernel = np.outer(taps, taps)
    padded = np.pad(img, radius, mode="edge")
    out = np.empty_like(img, dtype=np.float64)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            window = padded[y : y + 2 * radius + 1, x : x + 2 * radius + 1]
            out[y, x] = np.sum(kernel * window)
    return out


def point_map(xs, ys, width, height, sigma):
    """Probability map from raw point coordinates, by dense convolution."""
    impulses = np.zeros((height, width), dtype=np.float64)
    for x, y in zip(xs, ys):
        col = int(min(np.rint(x), width - 1))
        row = int(min(np.rint(y), height - 1))
        impulses[row, col] += 1.0
    blurred = dense_blur(impulses, sigma)
    return blurred / blurred.sum()


def pearson_two_pass(a, b):
    """Textbook two-pass Pearson correlation with scalar loops."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n = len(a)
    mean_a = sum(a) / n
    mean_b = sum(b) / n
    num = sum((a[i] - mean_a) * (b[i] - mean_b) for i in range(n))
    var_a = sum((a[i] - mean_a) ** 2 for i in range(n))
    var_b = sum((b[i] - mean_b) ** 2 for i in range(n))
    return num / math.sqrt(var_a * var_b)


def nss_loops(values, xs, ys):
    """NSS by explicit z-score and per-fixation lookup."""
    values = np.asarray(values, dtype=np.float64)
    height, width = values.shape
    n = values.size
    mean = sum(values.ravel()) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values.ravel()) / n)
    total = 0.0
    for x, y in zip(xs, ys):
        col = int(min(np.rint(x), width - 1))
        row = int(min(np.rint(y), height - 1))
        total += (values[row, col] - mean) / std
    return total / len(xs)


def ioc_loops(observers, width, height, sigma):
    """Leave-one-out NSS over a dict of observer -> list of (x, y)."""
    names = list(observers)
    scores = []
    for left_out in names:
        xs, ys = [], []
        for name in names:
            if name != left_out:
                for x, y in observers[name]:
                    xs.append(x)
                    ys.append(y)
        model = point_map(xs, ys, width, height, sigma)
        held_x = [x for x, _ in observers[left_out]]
        held_y = [y for _, y in observers[left_out]]
        scores.append(nss_loops(model, held_x, held_y))
    return sum(scores) / len(scores)


def average_ranks(values):
    """Ranks 1..n with ties sharing the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman_loops(a, b):
    """Spearman correlation: Pearson over average-tie ranks."""
    return pearson_two_pass(average_ranks(list(a)), average_ranks(list(b)))
