import numpy as np


def accuracy(logits, labels):
    return float((logits.argmax(axis=1) == labels).mean())


class RunningMean:
    def __init__(self):
        self.total = 0.0
        self.count = 0

    def update(self, value, n=1):
        self.total += value * n
        self.count += n

    @property
    def value(self):
        return self.total / max(self.count, 1)


def summarize(history):
    return {k: float(np.mean(v)) for k, v in history.items()}
