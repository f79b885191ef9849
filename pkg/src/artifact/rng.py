"""Named, independent random streams derived from one root seed.

``stream(seed, name)`` seeds a PCG64 generator from
``SeedSequence(seed, spawn_key=(STREAM_IDS[name],))``.  Streams with different
names never share state, so changing how many draws one stream consumes (for
example adding users to the channel stream) leaves every other stream intact.
Runs that share a root seed therefore see identical energy arrivals, backhaul
fades and request uniforms, which is what the paired comparisons rely on.
"""
import numpy as np

STREAM_IDS = {
    "channels": 0,
    "backhaul": 1,
    "requests": 2,
    "arrivals": 3,
    "placement": 4,
}


def stream(seed: int, name: str) -> np.random.Generator:
    if name not in STREAM_IDS:
        raise KeyError(f"unknown random stream {name!r}; known: {sorted(STREAM_IDS)}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAM_IDS[name],))
    return np.random.Generator(np.random.PCG64(ss))


def streams(seed: int) -> dict:
    return {name: stream(seed, name) for name in STREAM_IDS}
