"""
Gradients for the building blocks
=================================

The models are built on a small reverse-mode autodiff engine. Every block
can be checked against central finite differences.
"""

import numpy as np

from send_diar import autodiff as ad
from send_diar.nnet import AttentionAligner, AttentionConfig, Fsmn, FsmnConfig, SelfAttentionEncoder

rng = np.random.default_rng(0)

# A scalar loss through a matmul and a tanh.
w = ad.Parameter(rng.standard_normal((3, 2)), "w")
x = rng.standard_normal((4, 3))
loss = ad.sum(ad.tanh(ad.matmul(x, w)))
ad.backward(loss)
print("loss", float(loss.data), "\ngradient\n", np.round(w.grad, 4))

# FSMN: a feed-forward layer with a learnable FIR memory over time.
fsmn = Fsmn(3, FsmnConfig(num_blocks=2, hidden_units=6, filter_size=5, projection_dim=4), rng)
frames = ad.Tensor(rng.standard_normal((10, 3)))
weights = rng.standard_normal((10, 6))
print("FSMN grad check:", ad.grad_check(lambda: ad.sum(fsmn(frames) * weights), fsmn.parameters()))

# Text encoder and the word-to-frame aligner used by the text-aware model.
encoder = SelfAttentionEncoder(AttentionConfig(model_dim=8, num_heads=2, num_blocks=1, ffn_dim=8), rng)
aligner = AttentionAligner(8, rng)
words = ad.Tensor(rng.standard_normal((4, 8)))
speech = ad.Tensor(rng.standard_normal((12, 8)))
M = aligner(encoder(words), speech)
print("aligned word vectors:", M.shape, "attention rows sum to", aligner.last_weights.sum(axis=1))
params = encoder.parameters() + aligner.parameters()
target = rng.standard_normal((4, 8))
print("encoder + aligner grad check:",
      ad.grad_check(lambda: ad.sum(aligner(encoder(words), speech) * target), params))
