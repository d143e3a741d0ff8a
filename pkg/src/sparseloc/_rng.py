"""Counter-based random streams: one Philox stream per (seed, site index).

Every random quantity in the package is drawn from a stream keyed by a
64-bit experiment seed plus the canonical index of the consumer (a site,
a trial block, a pipeline cell).  Streams with distinct keys are
independent by construction, so results never depend on iteration order
or on how work is split across workers.
"""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(seed: int, *tags: int) -> int:
    """Derive an independent 64-bit sub-seed from `seed` and integer tags."""
    ss = np.random.SeedSequence(entropy=seed & _MASK64, spawn_key=tuple(t & _MASK64 for t in tags))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def site_generator(seed: int, index: int) -> np.random.Generator:
    """Philox generator for stream `index` under experiment `seed`."""
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def site_uniforms(seed: int, indices: np.ndarray, trials: int = 1) -> np.ndarray:
    """Uniform[0,1) draws, shape (len(indices), trials).

    Row i holds the first `trials` values of the stream keyed by
    (seed, indices[i]); column t is reproducible independently of which
    other sites or trials are requested.
    """
    indices = np.asarray(indices, dtype=np.int64)
    out = np.empty((indices.size, trials))
    for row, idx in enumerate(indices):
        out[row] = site_generator(seed, int(idx)).random(trials)
    return out


def site_uniform_batches(
    seed: int, indices: np.ndarray, trials: int, batch: int
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (trial_offset, block) pairs covering `trials` columns.

    Memory-bounded variant of :func:`site_uniforms`: each block has shape
    (len(indices), <=batch) and concatenating the blocks reproduces the
    full matrix exactly.
    """
    indices = np.asarray(indices, dtype=np.int64)
    gens = [site_generator(seed, int(i)) for i in indices]
    done = 0
    while done < trials:
        width = min(batch, trials - done)
        block = np.empty((indices.size, width))
        for row, gen in enumerate(gens):
            block[row] = gen.random(width)
        yield done, block
        done += width
