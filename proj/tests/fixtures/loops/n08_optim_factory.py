def build_optimizer(params, lr):
    return torch.optim.Adam(params, lr=lr)


def lr_lambda(epoch):
    return 0.95 ** epoch
