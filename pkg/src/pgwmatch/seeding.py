"""Root-seed splitting.

Every random stream is seeded with ``SeedSequence([root, stream_id, *index])``
where ``stream_id`` is fixed per named stream below, so any run can be
reproduced from its root seed alone.
"""

import numpy as np

STREAMS = {
    "generate": 0,
    "embed-init": 1,
    "rwr": 2,
    "embed": 3,
    "negatives": 4,
}


def stream_seed(root: int, name: str, *index: int) -> int:
    seq = np.random.SeedSequence([int(root), STREAMS[name], *map(int, index)])
    return int(seq.generate_state(1)[0])
