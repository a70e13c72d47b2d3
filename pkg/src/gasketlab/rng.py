"""Counter-based random streams.

Every stream is keyed by (seed, tag, replicate, stream) so results do not
depend on the order in which replicates are evaluated or on worker count.
"""
import zlib

import numpy as np

_TAGS = {}


def _tag_id(tag):
    if isinstance(tag, int):
        return tag
    if tag not in _TAGS:
        _TAGS[tag] = zlib.crc32(tag.encode())
    return _TAGS[tag]


def stream(seed, tag, replicate=0, sub=0):
    """Return a numpy Generator for the given key.

    Args:
        seed: user seed (non-negative int).
        tag: module tag, a short string such as "cloud" or "walk".
        replicate: replicate index.
        sub: extra stream index inside a replicate.
    """
    ss = np.random.SeedSequence([int(seed), _tag_id(tag), int(replicate), int(sub)])
    return np.random.Generator(np.random.Philox(ss))
