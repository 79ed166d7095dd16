from .backend import IdealBackend, SharedBackend, make_backend
from .fixed_point import DEFAULT_CODEC, EncodingError, FixedPointCodec
from .sharing import (
    ADJACENCY_BIT,
    CLIP_BIT,
    GLOBAL_AGGREGATE,
    REVEAL_WHITELIST,
    BeaverTriple,
    Dealer,
    ProtocolError,
    RevealEntry,
    RevealLog,
    Share,
    SharedVector,
    TripleExhausted,
    add_shared,
    dot_shared,
    less_than_shared,
    matmul_shared,
    mul_shared,
    reconstruct,
    reveal,
    share,
)

__all__ = [
    "ADJACENCY_BIT",
    "CLIP_BIT",
    "GLOBAL_AGGREGATE",
    "REVEAL_WHITELIST",
    "BeaverTriple",
    "DEFAULT_CODEC",
    "Dealer",
    "EncodingError",
    "FixedPointCodec",
    "IdealBackend",
    "ProtocolError",
    "RevealEntry",
    "RevealLog",
    "Share",
    "SharedBackend",
    "SharedVector",
    "TripleExhausted",
    "add_shared",
    "dot_shared",
    "less_than_shared",
    "make_backend",
    "matmul_shared",
    "mul_shared",
    "reconstruct",
    "reveal",
    "share",
]
