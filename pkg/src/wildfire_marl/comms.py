"""Neighbour communication: broadcast inboxes, help requests, and the graph encoder."""
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .scenario import ConfigurationError
from .towers import N_NEIGHBORS, OBS_WIDTH, LocalObservation

HELP_EXPIRY = 5
HELP_CAPACITY = 3
# own obs + 3 neighbour messages + 3 help flags + own reserve
FRAME_WIDTH = OBS_WIDTH + N_NEIGHBORS * OBS_WIDTH + HELP_CAPACITY + 1


@dataclass(frozen=True)
class BroadcastMessage:
    observation: LocalObservation
    sender: int
    sent_at: int


@dataclass(frozen=True)
class HelpRequest:
    sender: int
    sent_at: int
    flag: bool = True

    @property
    def key(self):
        return (self.sender, self.sent_at)


@dataclass
class CommRecord:
    sender: int
    kind: str
    t_sent: int
    receivers: tuple
    responder: int = None


class Inboxes:
    """Message store for one episode.

    ``graph[u]`` lists the towers ``u`` listens to: ``u`` receives the
    broadcasts of each of them, and a help request from ``v`` goes to every
    tower in ``graph[v]``. Anything sent at ``t`` is readable from ``t + 1``.
    """

    def __init__(self, graph, help_expiry=HELP_EXPIRY, help_capacity=HELP_CAPACITY):
        self.graph = {int(k): list(v) for k, v in graph.items()}
        self.help_expiry = help_expiry
        self.help_capacity = help_capacity
        self._broadcast = {u: {v: [] for v in vs} for u, vs in self.graph.items()}
        self._help = defaultdict(list)
        self.responders = {}
        self.log = []
        self._help_records = {}

    def broadcast_step(self, observations, t):
        for u, senders in self.graph.items():
            for v in senders:
                slot = self._broadcast[u][v]
                slot.append(BroadcastMessage(observations[v], v, t))
                # one message readable now plus the one being sent
                del slot[:-2]

    def broadcast_inbox(self, tower, t):
        """Latest readable message from each listened-to tower (``None`` if none yet)."""
        out = []
        for v in self.graph[tower]:
            readable = [m for m in self._broadcast[tower][v] if m.sent_at < t]
            out.append(readable[-1] if readable else None)
        return out

    def send_help_request(self, sender, t):
        request = HelpRequest(sender=int(sender), sent_at=int(t))
        receivers = tuple(self.graph[sender])
        for u in receivers:
            self._help[u].append(request)
        record = CommRecord(sender=int(sender), kind="help", t_sent=int(t), receivers=receivers)
        self.log.append(record)
        self._help_records[request.key] = record
        return request

    def help_inbox(self, tower, t):
        """Readable, unexpired requests for ``tower``, oldest first, at most ``help_capacity``."""
        live = [r for r in self._help[tower] if t - r.sent_at <= self.help_expiry]
        self._help[tower] = live
        readable = [r for r in live if r.sent_at < t]
        return readable[-self.help_capacity:]

    def register_response(self, request, responder, t, helped=True):
        """Record ``responder`` as first responder; ``True`` means the bonus is earned."""
        if responder not in self.graph.get(request.sender, ()):
            return False
        if t < request.sent_at + 1:
            return False
        if request.key in self.responders or not helped:
            return False
        self.responders[request.key] = int(responder)
        record = self._help_records.get(request.key)
        if record is not None:
            record.responder = int(responder)
        return True

    def log_broadcast(self, t):
        for v in sorted(self.graph):
            receivers = tuple(u for u, vs in self.graph.items() if v in vs)
            self.log.append(CommRecord(sender=v, kind="broadcast", t_sent=int(t), receivers=receivers))


def assemble_frame(local, messages, help_requests, reserve, world_extent=1000.0):
    """Fixed-width per-frame input of one tower: 7 + 3*7 + 3 + 1 = 32 scalars."""
    parts = [local.features(world_extent)]
    for m in messages:
        parts.append(m.observation.features(world_extent) if m is not None else np.zeros(OBS_WIDTH))
    flags = np.zeros(HELP_CAPACITY)
    flags[: len(help_requests)] = [1.0 if r.flag else 0.0 for r in help_requests]
    parts.append(flags)
    parts.append([reserve])
    return np.concatenate(parts)


class MessagePassingEncoder(nn.Module):
    """One round of neighbour aggregation for a single tower.

    Each neighbour message goes through a shared affine+ReLU edge transform;
    the transformed messages are averaged, concatenated with the node's own
    features and passed through the node transform.
    """

    def __init__(self, edge_width=32, out_width=64, bias=True):
        super().__init__()
        self.edge = nn.Linear(OBS_WIDTH, edge_width, bias=bias)
        node_in = OBS_WIDTH + HELP_CAPACITY + 1 + edge_width
        self.node = nn.Linear(node_in, out_width, bias=bias)
        self.out_width = out_width

    def forward(self, frame):
        if frame.shape[-1] != FRAME_WIDTH:
            raise ConfigurationError(f"encoder expects {FRAME_WIDTH} inputs per frame, got {frame.shape[-1]}")
        own = frame[..., :OBS_WIDTH]
        msgs = frame[..., OBS_WIDTH:OBS_WIDTH * (N_NEIGHBORS + 1)]
        msgs = msgs.reshape(*frame.shape[:-1], N_NEIGHBORS, OBS_WIDTH)
        rest = frame[..., OBS_WIDTH * (N_NEIGHBORS + 1):]
        agg = torch.relu(self.edge(msgs)).mean(dim=-2)
        return torch.relu(self.node(torch.cat([own, rest, agg], dim=-1)))


def gnn_encode(local, broadcast_inbox, help_inbox, own_reserve, encoder):
    """Embed one tower's current frame with ``encoder``; returns a numpy vector."""
    frame = assemble_frame(local, broadcast_inbox, help_inbox, own_reserve)
    param = next(encoder.parameters())
    with torch.no_grad():
        out = encoder(torch.as_tensor(frame, dtype=param.dtype))
    return out.numpy()
