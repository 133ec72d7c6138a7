"""Train the tiny classifier for two epochs and report loss and accuracy."""
import argparse
import os

import numpy as np


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seed", type=int, default=int(os.environ.get("REPRO_SEED", "0")))
    seed = p.parse_args().seed
    rng = np.random.default_rng(seed)

    print("PHASE setup")
    vocab, seq_len, classes, dim, batch = 50, 12, 4, 32, 16
    x = rng.integers(0, vocab, size=(256, seq_len))
    y = (x % classes).max(axis=1)
    table = rng.normal(0.0, 0.1, size=(vocab, dim))
    w = rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, classes))

    print("PHASE training")
    for epoch in range(2):
        losses = []
        for start in range(0, len(x), batch):
            xb, yb = x[start:start + batch], y[start:start + batch]
            pooled = table[xb].mean(axis=1)
            probs = softmax(pooled @ w)
            losses.append(-np.log(probs[np.arange(len(yb)), yb] + 1e-12).mean())
            grad = probs
            grad[np.arange(len(yb)), yb] -= 1.0
            w -= 0.1 * pooled.T @ grad / len(yb)
        acc = float((softmax(table[x].mean(axis=1) @ w).argmax(axis=1) == y).mean())
        print("METRIC loss", float(np.mean(losses)))
        print("METRIC accuracy", acc)


if __name__ == "__main__":
    main()
