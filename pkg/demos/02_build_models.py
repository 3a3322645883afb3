"""Build the three reference models and weigh them, in parameters and bytes.

The byte figure is what one broadcast of the model costs on the wire:
the serialized form carries tensor names, shapes, and float32 payloads
behind a fixed 12-byte header.
"""

import numpy as np

from edgefed import models, transport

for kind in models.MODEL_KINDS:
    model = models.build_model(kind, seed=0)
    print(f"{kind}: input {model.spec.input_shape}, "
          f"{model.spec.num_classes} classes")
    for p in model.params:
        print(f"  {p.name:<12} {str(p.value.shape):<16} {p.value.size:>9,}")
    wire = len(transport.encode(transport.GlobalModelMsg(0, model.params)))
    print(f"  total {model.params.count:,} parameters, "
          f"{wire:,} bytes per broadcast\n")

# The CNN is the one sized for 28x28 grayscale images; a forward pass
# maps a batch straight to class logits.
cnn = models.build_model("cnn", seed=0)
x = np.random.default_rng(1).random((4, 1, 28, 28), dtype=np.float32)
logits, _ = cnn.forward(x)
print(f"cnn logits for a batch of 4: shape {logits.shape}")
print(f"predicted classes: {cnn.predict(x)}")
