import numpy as np

from minitrans.config import parse_args
from minitrans.data import make_batches, make_dataset, train_val_split
from minitrans.losses import cross_entropy
from minitrans.metrics import RunningMean, accuracy
from minitrans.model import TinyClassifier
from minitrans.optim import SGD


def train(cfg):
    rng = np.random.default_rng(cfg.seed)
    x, y = make_dataset(cfg, rng)
    (xtr, ytr), (xva, yva) = train_val_split(x, y)
    model = TinyClassifier(cfg, rng)
    opt = SGD(model.params(), lr=cfg.lr)
    for epoch in range(cfg.epochs):
        running = RunningMean()
        for xb, yb in make_batches(xtr, ytr, cfg.batch_size, rng):
            logits = model.forward(xb)
            loss, grad = cross_entropy(logits, yb)
            model.zero_grad()
            model.backward(grad)
            opt.step()
            running.update(loss, len(yb))
        val_acc = accuracy(model.forward(xva), yva)
        print(f"epoch {epoch} loss: {running.value:.4f} accuracy: {val_acc:.4f}")
    return model


def main(argv=None):
    train(parse_args(argv))


if __name__ == "__main__":
    main()
