"""Remote RL protocol: parties, wire messages, transports and the run loop."""

from .engine import evaluate, random_returns, run_experiment
from .messages import HEADER_BYTES, MsgType, WireMessage, frame_decode, frame_encode, read_frame
from .parties import Actor, Controller, StepInfo, actor_step, controller_step

__all__ = [
    "HEADER_BYTES",
    "Actor",
    "Controller",
    "MsgType",
    "StepInfo",
    "WireMessage",
    "actor_step",
    "controller_step",
    "evaluate",
    "frame_decode",
    "frame_encode",
    "random_returns",
    "read_frame",
    "run_experiment",
]
