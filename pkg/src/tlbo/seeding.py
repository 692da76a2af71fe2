"""Named random sub-streams derived from one run seed.

Every stochastic component (GP restarts, bootstrap, guard draws,
acquisition sampling) asks for its own stream by name, so adding a draw in
one component never shifts the numbers another component sees.
"""

import zlib

import numpy as np


def _token(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_seed(seed, *names) -> int:
    """Deterministic 63-bit integer seed for ``(seed, *names)``."""
    ss = np.random.SeedSequence([_token(seed)] + [_token(n) for n in names])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def stream(seed, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))
