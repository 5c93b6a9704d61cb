"""Remote generation (ordered random coding) and baseline payload codecs."""

from .bits import (
    action_decode,
    action_encode,
    asc_bits,
    bits_to_bytes,
    bytes_to_bits,
    elias_delta_decode,
    elias_delta_encode,
    elias_delta_length,
)
from .orc import EncodedMessage, OrcConfig, index_ideal_bits, orc_decode, orc_encode
from .reward import RewardScheme, reward_decode, reward_encode

index_wire_encode = elias_delta_encode


def index_wire_decode(bits: str) -> int:
    n, end = elias_delta_decode(bits)
    return n


__all__ = [
    "EncodedMessage",
    "OrcConfig",
    "RewardScheme",
    "action_decode",
    "action_encode",
    "asc_bits",
    "bits_to_bytes",
    "bytes_to_bits",
    "elias_delta_decode",
    "elias_delta_encode",
    "elias_delta_length",
    "index_ideal_bits",
    "index_wire_decode",
    "index_wire_encode",
    "orc_decode",
    "orc_encode",
    "reward_decode",
    "reward_encode",
]
