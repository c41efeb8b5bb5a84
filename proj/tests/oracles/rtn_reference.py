"""Reference per-tensor absmax RTN with a binary16 scale (numpy float16).

Codes are symmetric integers in [-(2^(b-1)-1), 2^(b-1)-1]; numpy rounds
half to even like std::nearbyint. Output is pasted into tests/test_decoder.cpp.
"""
import numpy as np

w = np.array([0.731, -1.402, 0.0005, 0.25, -0.249, 1.399, -0.6, 0.98], dtype=np.float64)
for bits in (3, 6):
    qmax = 2 ** (bits - 1) - 1
    scale = float(np.float16(np.abs(w).max() / qmax))
    codes = np.clip(np.rint(w / scale), -qmax, qmax).astype(int)
    print(bits, repr(scale), [int(c) for c in codes])
