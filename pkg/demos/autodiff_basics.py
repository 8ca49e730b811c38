"""A tour of the tensor engine: build a graph, differentiate it, check
the gradients numerically, then fit a small network with Adam."""

import numpy as np

from blindtrack.nn import Adam, Linear
from blindtrack.tensor import Tensor, mean_all, mse_loss, relu, square

# -- a tiny graph, differentiated by hand vs by the engine ---------------
# f(a, b) = mean((a @ b)^2 + a * 3)
a = Tensor(np.array([[1.0, -2.0], [0.5, 4.0]]), requires_grad=True)
b = Tensor(np.array([[2.0, 0.0], [1.0, -1.0]]), requires_grad=True)
out = mean_all(square(a @ b) + a * 3.0)
out.backward()
print("f(a, b) =", out.item())
print("df/da =\n", a.grad)

# central differences on one entry as a spot check
h = 1e-6
a.data[0, 1] += h
up = mean_all(square(a @ b) + a * 3.0).item()
a.data[0, 1] -= 2 * h
down = mean_all(square(a @ b) + a * 3.0).item()
a.data[0, 1] += h
numeric = (up - down) / (2 * h)
print(f"numeric df/da[0,1] = {numeric:.8f}, engine = {a.grad[0, 1]:.8f}")

# -- fit y = sin(x) with a two-layer relu network ------------------------
rng = np.random.default_rng(0)
xs = np.linspace(-3, 3, 64).reshape(-1, 1)
ys = np.sin(xs)

hidden = Linear(1, 32, rng)
out_layer = Linear(32, 1, rng)
params = hidden.parameters() + out_layer.parameters()
opt = Adam(params, lr=1e-2)

inputs = Tensor(xs)
targets = Tensor(ys)
for step in range(400):
    pred = out_layer(relu(hidden(inputs)))
    loss = mse_loss(pred, targets)
    loss.backward()
    opt.step()
    if step % 100 == 0 or step == 399:
        print(f"step {step:3d} loss {loss.item():.6f}")

pred = out_layer(relu(hidden(inputs))).data
worst = np.abs(pred - ys).max()
print(f"worst absolute error after fitting: {worst:.4f}")
