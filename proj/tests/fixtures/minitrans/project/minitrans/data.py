import numpy as np


def make_dataset(cfg, rng):
    """Random token sequences; the label is the most frequent token bucket."""
    x = rng.integers(0, cfg.vocab_size, size=(cfg.num_samples, cfg.seq_len))
    buckets = x % cfg.num_classes
    y = np.array([np.bincount(row, minlength=cfg.num_classes).argmax() for row in buckets])
    return x, y


def make_batches(x, y, batch_size, rng):
    order = rng.permutation(len(x))
    for start in range(0, len(x), batch_size):
        idx = order[start:start + batch_size]
        yield x[idx], y[idx]


def train_val_split(x, y, frac=0.8):
    n = int(len(x) * frac)
    return (x[:n], y[:n]), (x[n:], y[n:])
