"""Transports between the controller and its actors.

``InProcess`` calls the actors directly but still passes every message through
its binary frame. ``Stream`` runs each actor in its own thread behind a socket
pair: controller-to-actor frames go down the socket, the actor answers every
step with an ACK frame carrying the action it executed and every epoch with
an ACK carrying its parameter digest and a checkpoint. A per-step barrier
keeps the two sides on one logical clock.

Observations reach actors through a separate queue, standing in for the
actor's own sensors; that queue never carries rewards.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading

from ..codec.bits import action_decode, action_encode, asc_bits
from ..errors import DecodeError, ProtocolError, RemoteRLError
from ..policy import PolicyParams, load_checkpoint, save_checkpoint
from .messages import HEADER_BYTES, MsgType, WireMessage, frame_decode, frame_encode, read_frame
from .parties import Actor, StepInfo


class ChannelLog:
    """Counts what went down the controller-to-actor channels."""

    def __init__(self, n: int):
        self.payload_bits = [0] * n
        self.header_bytes = [0] * n
        self.frames = [0] * n
        self.types: set[MsgType] = set()
        self.keep = False
        self.payloads: list[bytes] = []

    def add(self, msg: WireMessage):
        i = msg.actor_id
        self.payload_bits[i] += msg.nbits
        self.header_bytes[i] += HEADER_BYTES
        self.frames[i] += 1
        self.types.add(msg.msg_type)
        if self.keep:
            self.payloads.append(frame_encode(msg))


class InProcess:
    def __init__(self, actors: list[Actor]):
        self.actors = actors
        self.log = ChannelLog(len(actors))

    def _deliver(self, msg: WireMessage | None) -> WireMessage | None:
        if msg is None:
            return None
        self.log.add(msg)
        return frame_decode(frame_encode(msg))

    def step(self, infos: list[StepInfo], msgs: list[WireMessage | None]) -> list:
        return [a.step(info, self._deliver(m)) for a, info, m in zip(self.actors, infos, msgs)]

    def epoch(self, marks: list[WireMessage], next_infos: list[StepInfo]):
        """Returns ``(digests, acting parameters)`` reported by the actors."""
        digests = [a.end_epoch(self._deliver(m), nx) for a, m, nx in zip(self.actors, marks, next_infos)]
        return digests, [a.policy for a in self.actors]

    def close(self):
        pass


_DIGEST = struct.Struct("<Q")


def _actor_loop(actor: Actor, sock: socket.socket, inbox: queue.Queue, errors: list):
    rfile = sock.makefile("rb")
    try:
        while True:
            item = inbox.get()
            kind = item[0]
            if kind == "stop":
                break
            if kind == "step":
                _, info, has_msg = item
                msg = read_frame(rfile) if has_msg else None
                a = actor.step(info, msg)
                ack = WireMessage.from_bits(MsgType.ACK, actor.index, info.step,
                                            action_encode(a, actor.space))
            else:
                _, next_info = item
                mark = read_frame(rfile)
                digest = actor.end_epoch(mark, next_info)
                ack = WireMessage(MsgType.ACK, actor.index, mark.step,
                                  _DIGEST.pack(digest) + save_checkpoint(actor.policy))
            sock.sendall(frame_encode(ack))
    except Exception as exc:      # surfaced to the controller on its next read
        errors.append(exc)
    finally:
        rfile.close()
        sock.close()


class Stream:
    def __init__(self, actors: list[Actor]):
        self.n = len(actors)
        self.space = actors[0].space
        self.log = ChannelLog(self.n)
        self._socks, self._files, self._inboxes, self._threads = [], [], [], []
        self._errors: list[list] = []
        for a in actors:
            ctrl, remote = socket.socketpair()
            inbox: queue.Queue = queue.Queue()
            errs: list = []
            th = threading.Thread(target=_actor_loop, args=(a, remote, inbox, errs),
                                  name=f"actor-{a.index}", daemon=True)
            th.start()
            self._socks.append(ctrl)
            self._files.append(ctrl.makefile("rb"))
            self._inboxes.append(inbox)
            self._threads.append(th)
            self._errors.append(errs)

    def _send(self, i: int, msg: WireMessage):
        self.log.add(msg)
        self._socks[i].sendall(frame_encode(msg))

    def _ack(self, i: int, step: int) -> WireMessage:
        try:
            ack = read_frame(self._files[i])
        except DecodeError as exc:
            self._threads[i].join(timeout=5.0)
            if self._errors[i]:
                err = self._errors[i][0]
                if isinstance(err, RemoteRLError):
                    raise err
                raise ProtocolError(f"actor {i} failed: {err!r}") from err
            raise ProtocolError(f"actor {i} channel closed: {exc}") from exc
        if ack.msg_type is not MsgType.ACK or ack.actor_id != i or ack.step != step:
            raise ProtocolError(f"actor {i}: bad acknowledgement {ack.msg_type.name} for step {ack.step}")
        return ack

    def step(self, infos: list[StepInfo], msgs: list[WireMessage | None]) -> list:
        for i, (info, m) in enumerate(zip(infos, msgs)):
            self._inboxes[i].put(("step", info, m is not None))
            if m is not None:
                self._send(i, m)
        # barrier: every actor reports its executed action before time advances
        k = asc_bits(self.space)
        return [action_decode(self._ack(i, info.step).bits[:k], self.space)
                for i, info in enumerate(infos)]

    def epoch(self, marks: list[WireMessage], next_infos: list[StepInfo]):
        for i, (m, nx) in enumerate(zip(marks, next_infos)):
            self._inboxes[i].put(("epoch", nx))
            self._send(i, m)
        digests: list[int] = []
        params: list[PolicyParams] = []
        for i, m in enumerate(marks):
            raw = self._ack(i, m.step).payload
            (d,) = _DIGEST.unpack_from(raw)
            p = load_checkpoint(raw[_DIGEST.size:])
            if p.digest() != d:
                raise ProtocolError(f"actor {i}: checkpoint does not match its digest")
            digests.append(d)
            params.append(p)
        return digests, params

    def close(self):
        for inbox in self._inboxes:
            inbox.put(("stop",))
        for th in self._threads:
            th.join(timeout=5.0)
        for f, s in zip(self._files, self._socks):
            f.close()
            s.close()


TRANSPORTS = {"inproc": InProcess, "stream": Stream}
