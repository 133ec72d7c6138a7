for i, (inputs, labels) in enumerate(dataloader):
    outputs = net(inputs)
    loss = criterion(outputs, labels) / accum_steps
    loss.backward()
    if (i + 1) % accum_steps == 0:
        optimizer.step()
        optimizer.zero_grad()
