"""Build a tiny network layer by layer and check its gradients by hand.

Every layer keeps its backward pass next to its forward pass, so the
whole chain can be verified against a finite-difference quotient: nudge
one weight, rerun the forward pass, and compare the slope to what
backprop reported.
"""

import numpy as np

from edgefed import nn

rng = np.random.default_rng(0)
net = nn.Network(
    [
        nn.Dense("fc1", 8, 6, rng),
        nn.ReLU(),
        nn.Dense("fc2", 6, 4, rng),
    ]
)
params = net.parameters()
print(f"network has {params.count} parameters in {len(list(params))} tensors")

x = rng.normal(size=(3, 8)).astype(np.float32)
labels = np.array([0, 3, 1])

logits, cache = net.forward(x)
loss, probs, grad = nn.softmax_cross_entropy(logits, labels)
net.backward(cache, grad)
print(f"loss on a random batch: {loss:.4f}")

# Compare the backprop gradient of fc1.weight against central-difference
# slopes. finite_diff_grad reruns the forward pass in a float64 shadow so
# the quotient is not drowned by single-precision rounding.
analytic = params["fc1.weight"].grad
numeric = nn.finite_diff_grad(net, x, labels, param_index=0)
worst = np.max(np.abs(analytic - numeric)) / np.max(np.abs(numeric))
index = (2, 1)
print("d loss / d fc1.weight:")
print(f"  backprop at {index}          {analytic[index]:+.8f}")
print(f"  finite difference at {index} {numeric[index]:+.8f}")
print(f"  worst relative error over the tensor: {worst:.2e}")

# One SGD step should lower the loss on the same batch.
nn.sgd_step(params, lr=0.1)
new_logits, _ = net.forward(x)
new_loss, _, _ = nn.softmax_cross_entropy(new_logits, labels)
print(f"loss after one SGD step: {new_loss:.4f} (was {loss:.4f})")
