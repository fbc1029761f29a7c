import zlib

import numpy as np


def derive_rng(seed, *names):
    """Independent generator for a named component under a root seed."""
    key = [int(seed)] + [zlib.crc32(str(n).encode()) for n in names]
    return np.random.default_rng(np.random.SeedSequence(key))
