import hashlib
from typing import Mapping

import numpy as np


def array_fingerprint(arrays: Mapping[str, np.ndarray]) -> str:
    """sha256 over names, shapes and float64 bytes, in name order."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        value = np.ascontiguousarray(arrays[name], dtype=np.float64)
        h.update(name.encode("utf-8"))
        h.update(str(value.shape).encode("ascii"))
        h.update(value.tobytes())
    return h.hexdigest()
