"""
Power-set encoding of overlapping speakers
==========================================

A frame where speakers 1 and 3 talk at once is a multi-label target. The
power-set encoding turns every allowed speaker subset into one class, so a
plain softmax can predict overlap.
"""

import numpy as np

from send_diar.pse import build_valid_table, classes_to_labels, decode, encode, labels_to_classes

# Speaker n contributes 2**(n-1); the empty set (silence) is code 0.
print("code of {1, 3} with 4 slots:", encode({1, 3}, 4))
print("speakers of code 10:", sorted(decode(10, 4)))

# Only subsets with at most K speakers become output classes.
table = build_valid_table(k=2, n=4)
print(f"K=2, N=4 gives {len(table)} classes; codes {table.codes.tolist()}")
print("the configuration used for real meetings, K=3 and N=16:", len(build_valid_table(3, 16)), "classes")

# Frame labels go to class ids and back without loss.
labels = np.array([[0, 0, 0, 0],
                   [1, 0, 0, 0],
                   [1, 0, 1, 0],
                   [0, 0, 1, 0]])
classes = labels_to_classes(labels, table)
print("class ids per frame:", classes.tolist())
assert np.array_equal(classes_to_labels(classes, table), labels)

# Three simultaneous speakers exceed K=2: rejected by default, or truncated on request.
crowded = np.array([[1, 1, 1, 0]])
print("truncated to the first two slots:", classes_to_labels(labels_to_classes(crowded, table, "truncate"), table))
