"""Per-utterance random streams.

Every random decision in the toolkit draws from a stream keyed by the run
seed plus stable identifiers (utterance id, span, stage name), so results
do not depend on worker count or corpus sharding.
"""

from __future__ import annotations

import hashlib
import random


def stream(seed: int, *key) -> random.Random:
    material = "\x1f".join(str(k) for k in (seed, *key))
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))
