"""Counter-based random streams keyed by (master seed, ue id, epoch, purpose)."""
import zlib

import numpy as np


def _tag_key(tag):
    return zlib.crc32(tag.encode("utf-8"))


def stream(master_seed, ue_id=0, epoch=0, tag="default"):
    """Return an independent Philox generator for one (seed, ue, epoch, tag) cell.

    The same key always yields the same stream, whatever order streams are
    requested in, so runs can be parallelised without changing results.
    """
    entropy = [int(master_seed) & 0xFFFFFFFF, int(ue_id) & 0xFFFFFFFF,
               int(epoch) & 0xFFFFFFFF, _tag_key(tag)]
    seq = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.Philox(seq))
