"""Directional IR messaging.

Frames, geometric neighborhood discovery (4 rim emitters, 8 receiver
sectors, optional occlusion by bodies and walls) and per-delivery
Bernoulli success sampling under either a static rate or the dynamic
density/size-dependent reception model.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from pogosim.config import CommModelParams
from pogosim.world import Arena, WorldObject, point_segment_distance

SHORT_HEADER_SIZE = 3
LONG_HEADER_SIZE = 12  # Fig-2 style larger header; documented constant
SHORT_MAX_PAYLOAD = 29  # platform constants, configurable here
LONG_MAX_PAYLOAD = 64
INBOX_CAPACITY = 32

EMITTER_DIRS = ("front", "left", "back", "right")
RECEIVER_KINDS = ("pogobot", "pogobject")


class CommError(ValueError):
    pass


@dataclass
class Message:
    """One IR frame. ``receiver_dir`` (sector 0-7) is set at delivery."""

    kind: str  # short | long
    sender_id: int
    payload: bytes
    emitter_dir: str = "omni"
    receiver_dir: int = -1
    sender_category: str = ""

    def __post_init__(self):
        if self.kind not in ("short", "long"):
            raise CommError(f"unknown message kind {self.kind!r}")
        limit = SHORT_MAX_PAYLOAD if self.kind == "short" else LONG_MAX_PAYLOAD
        if len(self.payload) > limit:
            raise CommError(f"{self.kind} payload of {len(self.payload)} bytes "
                            f"exceeds the {limit}-byte maximum")
        if self.emitter_dir != "omni" and self.emitter_dir not in EMITTER_DIRS:
            raise CommError(f"unknown emitter direction {self.emitter_dir!r}")

    @property
    def header_size(self) -> int:
        return SHORT_HEADER_SIZE if self.kind == "short" else LONG_HEADER_SIZE

    @property
    def payload_length(self) -> int:
        return len(self.payload)

    @property
    def msg_size(self) -> int:
        return self.header_size + len(self.payload)


@dataclass(frozen=True)
class DeliveryContext:
    p_send: float  # per-pogotick send probability, in [0, 1]
    cluster_size: int  # 1 + number of neighbors of the sender
    msg_size: int  # header + payload, bytes

    def __post_init__(self):
        if not 0.0 <= self.p_send <= 1.0:
            raise CommError(f"p_send must be in [0,1], got {self.p_send}")
        if self.cluster_size < 1:
            raise CommError(f"cluster_size must be >= 1, got {self.cluster_size}")


def reception_probability(params: CommModelParams, ctx: DeliveryContext) -> float:
    """Per-delivery success probability, clamped to [0, 1]."""
    if params.type == "static":
        return params.rate
    try:
        denom = (params.alpha
                 + params.beta * ctx.p_send ** params.gamma
                 * float(ctx.cluster_size) ** params.delta
                 * math.exp(params.zeta * ctx.msg_size)
                 + params.theta * ctx.p_send * ctx.cluster_size)
    except OverflowError:
        raise CommError(f"reception model overflowed for {ctx}") from None
    if not math.isfinite(denom) or denom <= 0.0:
        raise CommError(f"reception model diverged (denominator={denom!r}) for {ctx}")
    p = 1.0 / denom
    return min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------------------
# geometric neighborhood

@dataclass(frozen=True)
class Link:
    receiver: WorldObject
    receiver_dir: int  # 8-sector arrival bearing in the receiver frame
    emitter_index: int  # index into the sender's emitters (0 for walls/membranes)
    distance: float


def emitter_positions(sender: WorldObject) -> np.ndarray:
    """The 4 rim emitters at headings {0, pi/2, pi, 3pi/2} from the sender angle."""
    x, y, a = sender.pose
    r = sender.spec.radius
    angles = a + np.array([0.0, 0.5, 1.0, 1.5]) * math.pi
    return np.stack([x + r * np.cos(angles), y + r * np.sin(angles)], axis=1)


def _receiver_sector(receiver: WorldObject, source_xy) -> int:
    rx, ry, ra = receiver.pose
    bearing = math.atan2(source_xy[1] - ry, source_xy[0] - rx) - ra
    return int(round(bearing / (math.pi / 4))) % 8


def _segment_blocked(p, q, blockers, wall_segments) -> bool:
    for center, radius in blockers:
        if point_segment_distance(center, p, q) < radius:
            return True
    for a, b in wall_segments:
        if _segments_cross(p, q, a, b):
            return True
    return False


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def neighbors(sender: WorldObject, world: Iterable[WorldObject], arena: Arena,
              ignore_occlusions: bool = True) -> list[Link]:
    """Receivers within the sender's communication range, one link per receiver.

    Robot senders emit from their 4 rim emitters; pogowalls from every wall
    segment; membranes from every chain link. With occlusions on, a link is
    dropped when the emitter-to-receiver ray crosses another body or a wall.
    """
    comm_radius = sender.spec.communication_radius
    receivers = [o for o in world
                 if o.kind in RECEIVER_KINDS and o is not sender and o.id != sender.id]

    if sender.kind == "pogowall":
        sources = [(0, seg) for seg in (sender.segments if sender.segments is not None
                                        else arena.wall_segments)]
        mode = "segments"
    elif sender.kind == "membrane":
        sources = [(0, p) for p in sender.link_positions]
        mode = "points"
    else:
        sources = list(enumerate(emitter_positions(sender)))
        mode = "points"

    blockers = None
    wall_segs = ()
    if not ignore_occlusions:
        blockers = [(np.array(o.pose[:2]), o.spec.radius) for o in world
                    if o.kind in ("pogobot", "pogobject", "passive_object")]
        wall_segs = arena.wall_segments if sender.kind not in ("pogowall",) else ()

    links: list[Link] = []
    for recv in receivers:
        rpos = np.array(recv.pose[:2])
        best: Optional[tuple[float, int, np.ndarray]] = None
        for emitter_index, src in sources:
            if mode == "segments":
                d = point_segment_distance(rpos, src[0], src[1])
                # nearest point on the segment acts as the emitting element
                spos = _closest_on_segment(rpos, src[0], src[1])
            else:
                spos = np.asarray(src, dtype=float)
                d = float(np.hypot(*(rpos - spos)))
            edge_distance = d - recv.spec.radius
            if edge_distance > comm_radius:
                continue
            if best is None or d < best[0]:
                best = (d, emitter_index, spos)
        if best is None:
            continue
        d, emitter_index, spos = best
        if not ignore_occlusions:
            others = [(c, r) for c, r in blockers
                      if not np.array_equal(c, rpos)
                      and (sender.kind not in RECEIVER_KINDS
                           or not np.array_equal(c, np.array(sender.pose[:2])))]
            if _segment_blocked(spos, rpos, others, wall_segs):
                continue
        links.append(Link(receiver=recv, receiver_dir=_receiver_sector(recv, spos),
                          emitter_index=emitter_index, distance=d))
    return links


def _closest_on_segment(p, a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((np.asarray(p) - a) @ ab / denom, 0.0, 1.0))
    return a + t * ab


# ---------------------------------------------------------------------------
# delivery

class Inbox:
    """Bounded per-robot message queue; overflow drops the oldest frame."""

    def __init__(self, capacity: int = INBOX_CAPACITY):
        self._queue: deque[Message] = deque()
        self.capacity = capacity
        self.dropped = 0

    def push(self, message: Message) -> None:
        if len(self._queue) >= self.capacity:
            self._queue.popleft()
            self.dropped += 1
        self._queue.append(message)

    def pop(self) -> Optional[Message]:
        return self._queue.popleft() if self._queue else None

    def __len__(self) -> int:
        return len(self._queue)


@dataclass
class Emission:
    sender: WorldObject
    message: Message
    p_send: float
    links: list[Link]

    @property
    def cluster_size(self) -> int:
        return 1 + len({link.receiver.id for link in self.links})


@dataclass
class DeliveryStats:
    attempted: int = 0
    delivered: int = 0
    per_link: dict = field(default_factory=dict)  # (sender_id, receiver_id) -> [sent, ok]


def deliver(emissions: list[Emission], rng: np.random.Generator,
            inboxes: dict[int, Inbox], stats: Optional[DeliveryStats] = None) -> None:
    """Draw one Bernoulli per (emission, in-range receiver) pair.

    Deliveries land in receiver inboxes in (sender id, emitter index,
    receiver id) order, so runs are reproducible for a fixed rng state.
    """
    order = sorted(range(len(emissions)), key=lambda k: emissions[k].sender.id)
    for k in order:
        emission = emissions[k]
        # the delivery context is identical for every link of one emission
        ctx = DeliveryContext(p_send=emission.p_send,
                              cluster_size=emission.cluster_size,
                              msg_size=emission.message.msg_size)
        p = reception_probability(emission.sender.spec.msg_success_rate, ctx)
        links = sorted(emission.links,
                       key=lambda l: (l.emitter_index, l.receiver.id))
        draws = rng.random(len(links))
        template = emission.message
        for link, draw in zip(links, draws):
            ok = bool(draw < p)
            if stats is not None:
                stats.attempted += 1
                key = (emission.sender.id, link.receiver.id)
                sent_ok = stats.per_link.setdefault(key, [0, 0])
                sent_ok[0] += 1
                sent_ok[1] += int(ok)
                stats.delivered += int(ok)
            if not ok:
                continue
            msg = Message(kind=template.kind,
                          sender_id=template.sender_id,
                          payload=template.payload,
                          emitter_dir=template.emitter_dir,
                          receiver_dir=link.receiver_dir,
                          sender_category=template.sender_category)
            inbox = inboxes.setdefault(link.receiver.id, Inbox())
            inbox.push(msg)
