import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pogosim.comm import (
    CommError,
    DeliveryContext,
    DeliveryStats,
    Emission,
    Inbox,
    Message,
    deliver,
    neighbors,
    reception_probability,
)
from pogosim.config import CommModelParams, ObjectSpec
from pogosim.world import WorldObject, load_arena

SQUARE = "0,0\n1,0\n1,1\n0,1"
DEFAULTS = CommModelParams(type="dynamic")


def _robot(rid, x, y, angle=0.0, radius=26.5, comm_radius=80.0, model=None):
    spec = ObjectSpec(type="pogobot", radius=radius, communication_radius=comm_radius,
                      msg_success_rate=model or CommModelParams())
    return WorldObject(id=rid, category="robots", kind="pogobot",
                       pose=(x, y, angle), spec=spec)


class TestReceptionProbability:
    def test_static_rate(self):
        params = CommModelParams(type="static", rate=0.9)
        ctx = DeliveryContext(p_send=0.7, cluster_size=5, msg_size=10)
        assert reception_probability(params, ctx) == 0.9

    def test_dynamic_p_send_zero_is_inverse_alpha(self):
        ctx = DeliveryContext(p_send=0.0, cluster_size=20, msg_size=64)
        assert reception_probability(DEFAULTS, ctx) == 1.0 / 1.03215183
        assert reception_probability(DEFAULTS, ctx) == pytest.approx(0.968850, abs=1e-6)

    def test_dynamic_against_high_precision_oracle(self):
        # frozen from an mpmath (50-digit) evaluation of the model formula
        ctx = DeliveryContext(p_send=0.5, cluster_size=10, msg_size=10)
        expected = 0.6526432402650425  # see oracle in test_acceptance.py
        got = reception_probability(DEFAULTS, ctx)
        assert got == pytest.approx(expected, rel=1e-12)
        assert 0.64 < got < 0.66

    def test_overflow_raises_not_nan(self):
        params = CommModelParams(type="dynamic", zeta=10.0)
        ctx = DeliveryContext(p_send=1.0, cluster_size=1000, msg_size=10_000)
        with pytest.raises(CommError):
            reception_probability(params, ctx)

    @given(p=st.floats(0, 1), c=st.integers(1, 100), m=st.integers(1, 67))
    @settings(max_examples=200)
    def test_bounded_and_monotone(self, p, c, m):
        ctx = DeliveryContext(p_send=p, cluster_size=c, msg_size=m)
        v = reception_probability(DEFAULTS, ctx)
        assert 0.0 <= v <= 1.0
        # non-increasing in each argument with the published coefficients
        assert reception_probability(DEFAULTS, DeliveryContext(min(p + 0.1, 1.0), c, m)) <= v + 1e-15
        assert reception_probability(DEFAULTS, DeliveryContext(p, c + 1, m)) <= v + 1e-15
        assert reception_probability(DEFAULTS, DeliveryContext(p, c, m + 1)) <= v + 1e-15


class TestMessage:
    def test_short_sizes(self):
        m = Message(kind="short", sender_id=1, payload=b"1234567")
        assert m.header_size == 3
        assert m.msg_size == 10

    def test_payload_limit(self):
        with pytest.raises(CommError, match="29-byte"):
            Message(kind="short", sender_id=1, payload=bytes(30))
        Message(kind="long", sender_id=1, payload=bytes(64))  # fine


class TestNeighbors:
    def setup_method(self):
        self.arena = load_arena(SQUARE, 1.0e6)

    def test_out_of_range(self):
        a = _robot(0, 400.0, 500.0)
        b = _robot(1, 600.0, 500.0)
        assert neighbors(a, [a, b], self.arena) == []

    def test_in_range_and_direction(self):
        # b sits 50 mm to the right of a; b faces +x so a arrives from behind
        a = _robot(0, 475.0, 500.0)
        b = _robot(1, 525.0, 500.0)
        links = neighbors(a, [a, b], self.arena)
        assert len(links) == 1
        link = links[0]
        assert link.receiver is b
        assert link.emitter_index == 0  # a's front emitter is nearest
        assert link.receiver_dir == 4  # arrival from b's back sector
        # analytic oracle: emitter at a's rim, distance = 50 - 26.5
        assert link.distance == pytest.approx(50.0 - 26.5)

    def test_occlusion_by_wall(self):
        # receiver on the far side of the boundary: ray crosses a wall
        a = _robot(0, 30.0, 500.0, comm_radius=200.0)
        b = _robot(1, -50.0, 500.0)
        b.pose = (-50.0, 500.0, 0.0)
        links = neighbors(a, [a, b], self.arena, ignore_occlusions=False)
        assert links == []

    def test_occlusion_by_body(self):
        a = _robot(0, 400.0, 500.0, comm_radius=200.0)
        mid = _robot(1, 470.0, 500.0)
        far = _robot(2, 540.0, 500.0)
        links = neighbors(a, [a, mid, far], self.arena, ignore_occlusions=False)
        ids = {l.receiver.id for l in links}
        assert 1 in ids and 2 not in ids
        # same geometry with occlusions ignored reaches both
        ids = {l.receiver.id for l in neighbors(a, [a, mid, far], self.arena)}
        assert ids == {1, 2}

    def test_symmetry_for_equal_robots(self):
        rng = np.random.default_rng(5)
        robots = [_robot(i, *rng.uniform(200, 800, size=2)) for i in range(12)]
        links = {(r.id, l.receiver.id) for r in robots
                 for l in neighbors(r, robots, self.arena)}
        assert links == {(b, a) for a, b in links}

    def test_wall_sender_reaches_adjacent_robot(self):
        wall_spec = ObjectSpec(type="pogowall", communication_radius=80.0)
        wall = WorldObject(id=65535, category="walls", kind="pogowall",
                           pose=(0.0, 0.0, 0.0), spec=wall_spec,
                           segments=self.arena.wall_segments)
        near = _robot(1, 60.0, 500.0)
        far = _robot(2, 500.0, 500.0)
        ids = {l.receiver.id for l in neighbors(wall, [wall, near, far], self.arena)}
        assert ids == {1}


class TestDeliver:
    def setup_method(self):
        self.arena = load_arena(SQUARE, 1.0e6)

    def _emission(self, sender, world, payload=b"1234567", p_send=0.5):
        msg = Message(kind="short", sender_id=sender.id, payload=payload)
        return Emission(sender=sender, message=msg, p_send=p_send,
                        links=neighbors(sender, world, self.arena))

    def test_lossless_delivers_exactly_once(self):
        model = CommModelParams(type="static", rate=1.0)
        a = _robot(0, 480.0, 500.0, model=model)
        b = _robot(1, 520.0, 500.0, model=model)
        inboxes = {}
        for _ in range(5):
            deliver([self._emission(a, [a, b])], np.random.default_rng(0), inboxes)
        assert len(inboxes[1]) == 5
        assert 0 not in inboxes

    def test_static_rate_monte_carlo(self):
        model = CommModelParams(type="static", rate=0.9)
        a = _robot(0, 480.0, 500.0, model=model)
        b = _robot(1, 520.0, 500.0, model=model)
        rng = np.random.default_rng(123)
        stats = DeliveryStats()
        inboxes = {}
        n = 10_000
        for _ in range(n):
            deliver([self._emission(a, [a, b])], rng, inboxes, stats)
        frac = stats.per_link[(0, 1)][1] / n
        # binomial 3-sigma bound: 3*sqrt(0.9*0.1/1e4) = 0.009
        assert abs(frac - 0.9) <= 0.01

    def test_delivery_deterministic(self):
        a = _robot(0, 480.0, 500.0)
        b = _robot(1, 520.0, 500.0)

        def run():
            rng = np.random.default_rng(9)
            inboxes = {}
            stats = DeliveryStats()
            for _ in range(100):
                deliver([self._emission(a, [a, b]), self._emission(b, [a, b])],
                        rng, inboxes, stats)
            return stats.per_link

        assert run() == run()

    def test_inbox_overflow_drops_oldest(self):
        inbox = Inbox(capacity=3)
        for i in range(5):
            inbox.push(Message(kind="short", sender_id=i, payload=b""))
        assert len(inbox) == 3
        assert inbox.dropped == 2
        assert inbox.pop().sender_id == 2

    def test_monte_carlo_matches_dynamic_model(self):
        # 10 robots in mutual range exchanging 7-byte short payloads
        model = CommModelParams(type="dynamic")
        robots = [_robot(i, 500.0 + 30 * math.cos(2 * math.pi * i / 10),
                         500.0 + 30 * math.sin(2 * math.pi * i / 10),
                         comm_radius=150.0, model=model)
                  for i in range(10)]
        rng = np.random.default_rng(2024)
        send_rng = np.random.default_rng(1)
        stats = DeliveryStats()
        inboxes = {}
        link_cache = {r.id: neighbors(r, robots, self.arena) for r in robots}
        assert all(len(l) == 9 for l in link_cache.values())
        expected = reception_probability(
            model, DeliveryContext(p_send=0.5, cluster_size=10, msg_size=10))
        for _ in range(2000):
            emissions = []
            for r in robots:
                if send_rng.random() < 0.5:
                    msg = Message(kind="short", sender_id=r.id, payload=b"0123456")
                    emissions.append(Emission(sender=r, message=msg, p_send=0.5,
                                              links=link_cache[r.id]))
            deliver(emissions, rng, inboxes, stats)
        for (_, _), (sent, ok) in stats.per_link.items():
            assert abs(ok / sent - expected) <= 0.05
        total = sum(v[0] for v in stats.per_link.values())
        ok = sum(v[1] for v in stats.per_link.values())
        assert abs(ok / total - expected) <= 0.01
