"""
Frame-to-speaker similarity
===========================

Every speech frame is compared with every speaker slot. The sigma-dot metric
applies tanh before the dot product, so the score stays in [-D, D] but
still reflects magnitude, which cosine discards.
"""

import numpy as np

from send_diar.similarity import cosine_sim, dot_sim, sigma_dot_sim, similarity_matrix

rng = np.random.default_rng(0)
h = rng.standard_normal(8)
e = rng.standard_normal(8)
for scale in (0.1, 1.0, 10.0):
    print(f"scale {scale:5}: dot {dot_sim(scale * h, e):8.3f}  cosine {cosine_sim(scale * h, e):6.3f}  "
          f"sigma-dot {sigma_dot_sim(scale * h, e):6.3f}")

# Saturation: huge inputs push sigma-dot to exactly +-D.
big = np.full(8, 1000.0)
print("sigma-dot at +-1000:", sigma_dot_sim(big, big), sigma_dot_sim(big, -big))

# A zero-padded bank slot gives cosine 0 and a flag rather than an error.
value, degenerate = cosine_sim(h, np.zeros(8), return_flag=True)
print("cosine against an empty slot:", value, "flagged:", degenerate)

# The T x N matrix the post-net consumes.
H = rng.standard_normal((5, 8))
E = np.vstack([rng.standard_normal((2, 8)), np.zeros((2, 8))])
print(np.round(similarity_matrix(H, E, "sigma_dot").values, 2))
