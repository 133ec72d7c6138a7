for step in range(1000):
    optimizer.minimize(loss_fn, var_list=[w, b])
