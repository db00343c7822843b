#!/usr/bin/env python3
"""Tour of the tensor engine: forward ops, reverse-mode gradients, and the
finite-difference cross-check that keeps them honest."""

import numpy as np

from shuffleformer import (Rng, Tensor, backward, conv2d, gelu, matmul,
                           softmax_lastdim, sum_all)

rng = Rng(0)

print("=" * 64)
print("1. A tiny expression and its gradients")
print("=" * 64)

a = Tensor(rng.normal((3, 4), dtype=np.float64), requires_grad=True)
b = Tensor(rng.normal((4, 2), dtype=np.float64), requires_grad=True)
loss = sum_all(gelu(matmul(a, b)))
backward(loss)
print(f"loss          = {float(loss.data):+.6f}")
print(f"dloss/da norm = {np.linalg.norm(a.grad):.6f}")
print(f"dloss/db norm = {np.linalg.norm(b.grad):.6f}")

print()
print("=" * 64)
print("2. Analytic vs central finite differences")
print("=" * 64)

h = 1e-6
entry = (1, 2)
keep = a.data[entry]
a.data[entry] = keep + h
up = float(sum_all(gelu(matmul(a, b))).data)
a.data[entry] = keep - h
down = float(sum_all(gelu(matmul(a, b))).data)
a.data[entry] = keep
numeric = (up - down) / (2 * h)
print(f"analytic  d/da{entry} = {a.grad[entry]:+.10f}")
print(f"numeric   d/da{entry} = {numeric:+.10f}")
print(f"difference          = {abs(a.grad[entry] - numeric):.2e}")

print()
print("=" * 64)
print("3. Convolution gradients flow to input, kernel, and bias")
print("=" * 64)

x = Tensor(rng.normal((1, 2, 5, 5), dtype=np.float64), requires_grad=True)
w = Tensor(rng.normal((3, 2, 3, 3), dtype=np.float64), requires_grad=True)
bias = Tensor(rng.normal((3,), dtype=np.float64), requires_grad=True)
out = conv2d(x, w, bias, stride=1, padding=1)
backward(sum_all(out))
print(f"conv output shape: {out.shape}")
print(f"bias gradient (one entry per output map): {bias.grad}")
print(f"kernel gradient norm: {np.linalg.norm(w.grad):.4f}")

print()
print("=" * 64)
print("4. Determinism: the same seed gives bit-identical results")
print("=" * 64)


def fresh_forward():
    r = Rng(123)
    q = Tensor(r.normal((4, 8), dtype=np.float32))
    k = Tensor(r.normal((8, 8), dtype=np.float32))
    return softmax_lastdim(matmul(q, k)).data


runs = [fresh_forward().tobytes() for _ in range(3)]
print(f"three reruns identical: {runs[0] == runs[1] == runs[2]}")
