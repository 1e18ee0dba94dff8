"""Reverse-mode autodiff in a few lines.

Builds a small conv -> pool -> dense graph by hand, checks its gradients
against central finite differences, then fits a line with SGD.
"""

import numpy as np

from fusegate import autodiff as ad

rng = np.random.default_rng(0)

x = ad.Tensor(rng.normal(size=(2, 20)), requires_grad=True, name="x")
k = ad.Tensor(rng.normal(size=(3, 2, 4)), requires_grad=True, name="kernels")
b = ad.Tensor(np.zeros(3), requires_grad=True, name="bias")
w = ad.Tensor(rng.normal(size=(27, 2)), requires_grad=True, name="dense")


def loss():
    h = ad.relu(ad.conv1d(x, k, b))            # (3, 17)
    h = ad.maxpool1d(h, window=2, stride=2)    # (3, 8)
    h = ad.reshape(h, (1, 24))
    h = ad.concat([h, ad.Tensor(np.ones((1, 3)))], axis=1)
    return ad.cross_entropy_loss(ad.matmul(h, w), [1])


value = loss()
tape = ad.backward(value)
print(f"loss {value.item():.4f}; backward visited {len(tape)} ops: {', '.join(tape.ops)}")
print(f"max relative error vs finite differences: {ad.gradcheck(loss, [x, k, b, w]):.2e}")

# least squares with plain SGD; the closed-form slope is the target
xs = rng.uniform(-1, 1, size=(64, 1))
ys = 3.0 * xs + rng.normal(0, 0.1, size=(64, 1))
slope = ad.Tensor(np.zeros((1, 1)), requires_grad=True, name="slope")
opt = ad.SGD([slope], lr=0.5)
for step in range(100):
    resid = ad.sub(ad.matmul(ad.Tensor(xs), slope), ad.Tensor(ys))
    ad.backward(ad.mean(ad.mul(resid, resid)))
    opt.step()
print(f"SGD slope {slope.data[0, 0]:.4f}, closed form {(xs.T @ ys / (xs.T @ xs)).item():.4f}")
