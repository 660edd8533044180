"""Deterministic seed splitting.

Every random draw in the package flows from one master seed through
labelled derivations, so components stay reproducible in isolation:

    derive_seed(master, "optimizer")            -> optimizer init jitter
    derive_seed(master, "proposal", t, attempt) -> generator call at
                                                   iteration t, retry attempt

The derivation is sha256 over the decimal master seed and the labels,
truncated to 32 bits. It is stable across platforms and Python versions
(unlike hash()).
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *labels: object) -> int:
    text = ":".join([str(int(master))] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
