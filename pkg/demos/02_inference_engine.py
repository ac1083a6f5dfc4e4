"""
CNN forward pass from first principles
======================================

The engine runs arbitrary stacks of conv2d / maxpool2d / relu / flatten /
globalavgpool / dense / softmax layers in float64. The shipped demo
classifier is pseudo-random but fully deterministic (xorshift64*, seed 42),
so its outputs can be locked as golden values.
"""

import numpy as np

from cxrtriage import nn
from cxrtriage.modelfile import make_demo_model, propagate_shapes, save_model

# The primitives, one by one.
x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
edge = np.array([[[[1.0, -1.0]]]])  # horizontal difference kernel
print("conv2d with a [1,1,1,2] difference kernel:")
print(nn.conv2d(x, edge, np.zeros(1), stride=1, pad=0)[0])

print("\nmaxpool2d 2x2 stride 2 of 1..16:")
print(nn.maxpool2d(np.arange(1, 17, dtype=float).reshape(1, 4, 4), 2, 2)[0])

print("\nsoftmax of [1, 2, 3]:", nn.softmax(np.array([1.0, 2.0, 3.0])))

# The demo classifier: shapes through the stack.
model = make_demo_model("demo-cxr-3class")
print(f"\n{model.name} v{model.version}, {len(save_model(model))} bytes on disk")
shape = (model.input_shape[2], model.input_shape[0], model.input_shape[1])
print(f"  input           {shape}")
for layer, out_shape in zip(model.layers, propagate_shapes(model)):
    print(f"  {layer.kind:<14}  {out_shape}")

# A full forward pass; identical inputs give bit-identical outputs.
rng = np.random.default_rng(0)
tensor = rng.random((3, 224, 224))
pred = nn.forward(model, tensor)
print("\nprediction:", {k: round(v, 4) for k, v in pred.as_dict()["probabilities"].items()})
print("argmax:", pred.argmax_label)
assert nn.forward(model, tensor).probabilities == pred.probabilities
print("repeat run: bit-identical")
