# A tour of the reverse-mode autodiff core.
#
# Every Tensor records the op that made it and a closure that pushes
# gradients to its parents; calling reverse_accumulate on a scalar walks
# the graph once in reverse topological order.

import numpy as np

from ssmamba.autograd import (Parameter, Tensor, finite_difference_gradient,
                              reverse_accumulate, zero_grads)

rng = np.random.default_rng(0)

# a small two-layer computation: z = tanh(x W1) W2, loss = mean(z^2)
W1 = Parameter(rng.normal(0, 0.5, size=(4, 8)), "W1", dtype=np.float64)
W2 = Parameter(rng.normal(0, 0.5, size=(8, 2)), "W2", dtype=np.float64)
x = Tensor(rng.standard_normal((3, 4)))


def loss():
    z = x.matmul(W1).tanh().matmul(W2)
    return (z * z).mean()


L = loss()
print("loss =", L.data)

reverse_accumulate(L)
print("dL/dW1 (corner):", W1.grad[0, 0])
print("dL/dW2 (corner):", W2.grad[0, 0])

# cross-check against 64-bit central finite differences (the FD helper
# evaluates a plain scalar, so unwrap the Tensor)
fd = finite_difference_gradient(lambda: float(loss().data), [W1, W2])
for p in (W1, W2):
    err = np.max(np.abs(p.grad - fd[p.name]))
    print(f"max |analytic - FD| for {p.name}: {err:.3e}")

# grads accumulate across backward passes until cleared
zero_grads([W1, W2])
reverse_accumulate(loss())
reverse_accumulate(loss())
print("two backward passes double the gradient:",
      np.allclose(W1.grad, 2 * fd["W1"], atol=1e-8))
