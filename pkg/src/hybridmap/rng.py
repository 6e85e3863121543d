"""Named, counter-based random number streams.

Every stochastic component draws from its own Philox generator, keyed by a
hash of ``(seed, stream path)``.  Streams are therefore independent of each
other and of consumption order elsewhere in the program, so reordering sweep
jobs or running evaluation repetitions in parallel cannot change any result.

Stream paths used across the package:

====================  =====================================================
``("data", split)``    synthetic sample noise and label shuffling
``("init", lid)``      parameter initialisation of layer ``lid``
``("train", tag)``     minibatch shuffling + forward-pass noise, one session
``("program", tag, rep)``  programming noise and drift exponents
``("eval", tag, rep)``     per-repetition read noise during evaluation
====================  =====================================================
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, *path) -> np.random.Generator:
    """Return the generator for stream ``path`` derived from ``seed``.

    The same ``(seed, path)`` pair always yields a generator producing the
    same sequence, regardless of platform or of any other stream's use.
    """
    tag = "/".join(str(p) for p in path)
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
