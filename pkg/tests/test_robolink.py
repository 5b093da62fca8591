"""Wire protocol, simulated robot semantics, and both transports."""

import random
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coassembly.planner import Pose, default_layout, generate_actions, grip, move
from coassembly.robolink import (
    CommandTimeout,
    ConnectionLost,
    CycleTimes,
    FrameError,
    InprocRobot,
    NackReceived,
    RobotSimCore,
    TcpRobotClient,
    TcpRobotServer,
    action_frame,
    decode_frame,
    deliver_component,
    encode_frame,
    hello_frame,
    nack_frame,
    part_conservation_error,
    status_frame,
)
from coassembly.workcell import ZONE_DELIVERY, WorldState


@pytest.fixture
def layout():
    return default_layout()


@pytest.fixture
def world(catalog):
    return WorldState(catalog)


@pytest.fixture
def core(catalog, layout, world):
    return RobotSimCore(catalog, layout, world)


@pytest.fixture
def robot(core):
    return InprocRobot(core)


class TestFrames:
    def test_encode_is_one_json_line(self):
        data = encode_frame(hello_frame(1))
        assert data.endswith(b"\n")
        assert data.count(b"\n") == 1

    def test_round_trip_simple(self):
        frame = nack_frame(7, "busy")
        assert decode_frame(encode_frame(frame)) == frame

    frame_values = st.one_of(
        st.integers(min_value=-(2**31), max_value=2**31),
        st.floats(allow_nan=False, allow_infinity=False, width=64),
        st.text(max_size=20),
        st.none(),
        st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=4),
    )

    @given(
        seq=st.integers(min_value=1, max_value=2**40),
        elapsed=st.floats(min_value=0, max_value=1e6, allow_nan=False),
        extra=st.dictionaries(
            st.text(min_size=1, max_size=10).filter(lambda k: k not in ("type", "seq")),
            frame_values,
            max_size=3,
        ),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip_preserves_values(self, seq, elapsed, extra):
        frame = {"type": "ack", "seq": seq, "elapsed_s": elapsed, **extra}
        decoded = decode_frame(encode_frame(frame))
        assert decoded.keys() == frame.keys()
        for key, value in frame.items():
            if isinstance(value, float):
                assert abs(decoded[key] - value) <= 1e-9 * max(1.0, abs(value))
            else:
                assert decoded[key] == value

    @pytest.mark.parametrize(
        "line",
        [
            b"this is not json\n",
            b"[1, 2, 3]\n",
            b'{"seq": 1}\n',
            b'{"type": "warp", "seq": 1}\n',
            b"\xff\xfe\n",
        ],
    )
    def test_decode_rejects_garbage(self, line):
        with pytest.raises(FrameError):
            decode_frame(line)

    def test_action_frames(self, layout):
        slot = layout.slot_pose(1)
        frame = action_frame(move(slot, "transit"), 3)
        assert frame["type"] == "move_to"
        assert frame["position"] == list(slot.position)
        assert frame["speed_class"] == "transit"
        frame = action_frame(grip("close"), 4)
        assert frame == {"type": "set_gripper", "seq": 4, "state": "close"}


class TestSimCoreSemantics:
    def test_full_delivery_job(self, robot, world, layout, catalog):
        report = deliver_component(robot, 3, layout, catalog)
        assert report.actions_completed == 8
        assert report.elapsed_s == pytest.approx(12.0)
        assert world.delivery_zone == {3}
        assert 3 not in world.magazine
        assert world.clock == pytest.approx(12.0)

    def test_statuses_bracket_the_pick_and_place(self, robot, world, layout, catalog):
        report = deliver_component(robot, 4, layout, catalog)
        assert [s.held for s in report.statuses] == [4, None]
        assert report.statuses[0].at == "slot:2"
        assert report.statuses[1].at == "delivery"

    def test_hello_reports_idle_robot(self, robot):
        status = robot.hello()
        assert status.gripper == "open"
        assert status.held is None

    def test_second_pick_of_same_slot_is_empty_slot(self, robot, world, layout, catalog):
        deliver_component(robot, 3, layout, catalog)
        clock_before = world.clock
        with pytest.raises(NackReceived) as excinfo:
            deliver_component(robot, 3, layout, catalog)
        assert excinfo.value.reason == "empty_slot"
        assert excinfo.value.report.actions_completed == 2
        assert excinfo.value.report.elapsed_s == pytest.approx(4.0)
        assert world.clock == pytest.approx(clock_before + 4.0)
        assert world.delivery_zone == {3}

    def test_close_away_from_any_slot(self, robot):
        with pytest.raises(NackReceived) as excinfo:
            robot.send_job([grip("close")])
        assert excinfo.value.reason == "not_at_slot"
        assert excinfo.value.report.actions_completed == 0

    def test_close_with_full_gripper(self, robot, layout):
        pick = [move(layout.slot_pose(1), "transit"), grip("close")]
        robot.send_job(pick)
        with pytest.raises(NackReceived) as excinfo:
            robot.send_job([grip("close")])
        assert excinfo.value.reason == "gripper_occupied"

    def test_open_away_from_delivery_keeps_part_held(self, robot, core, world, layout):
        robot.send_job([move(layout.slot_pose(1), "transit"), grip("close")])
        with pytest.raises(NackReceived) as excinfo:
            robot.send_job([grip("open")])
        assert excinfo.value.reason == "not_at_delivery"
        assert core.held == 3
        assert part_conservation_error(world, held=core.held) is None

    def test_open_with_empty_gripper_is_a_noop_ack(self, robot, world, layout):
        report = robot.send_job([move(layout.delivery_pose, "transit"), grip("open")])
        assert report.actions_completed == 2
        assert world.delivery_zone == set()
        assert world.magazine == {3, 4, 5, 6, 7, 8, 9}

    def test_nacked_command_costs_no_time(self, core, world):
        clock_before = world.clock
        replies = core.process({"type": "set_gripper", "seq": 1, "state": "close"})
        assert replies[-1]["type"] == "nack"
        assert world.clock == clock_before

    def test_seq_must_strictly_increase(self, core):
        assert core.process(hello_frame(5))[-1]["type"] == "ack"
        replies = core.process(hello_frame(5))
        assert replies == [nack_frame(5, "seq_order")]
        assert core.process(hello_frame(6))[-1]["type"] == "ack"

    def test_gaps_in_seq_are_allowed(self, core):
        assert core.process(hello_frame(1))[-1]["type"] == "ack"
        assert core.process(hello_frame(100))[-1]["type"] == "ack"

    def test_non_integer_seq(self, core):
        replies = core.process({"type": "hello", "seq": "one"})
        assert replies == [nack_frame(None, "bad_frame")]

    @pytest.mark.parametrize(
        "frame",
        [
            {"type": "move_to", "seq": 1, "position": [0.1, 0.2], "speed_class": "transit"},
            {"type": "move_to", "seq": 1, "position": [0.1, 0.2, 0.3], "speed_class": "warp"},
            {
                "type": "move_to",
                "seq": 1,
                "position": [0.1, 0.2, 0.3],
                "orientation": [2.0, 0.0, 0.0, 0.0],
                "speed_class": "transit",
            },
            {"type": "set_gripper", "seq": 1, "state": "clench"},
            {"type": "status", "seq": 1},
        ],
    )
    def test_bad_command_payloads(self, core, frame):
        replies = core.process(frame)
        assert replies[-1]["reason"] == "bad_frame"

    def test_move_charges_speed_class_time(self, core, world, layout):
        core.process(action_frame(move(layout.slot_pose(1), "transit"), 1))
        assert world.clock == pytest.approx(3.0)
        core.process(action_frame(move(layout.slot_pose(1), "approach"), 2))
        assert world.clock == pytest.approx(4.0)

    def test_custom_cycle_times(self, catalog, layout):
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world, CycleTimes(2.0, 0.5, 0.25))
        robot = InprocRobot(core)
        report = deliver_component(robot, 3, layout, catalog)
        assert report.elapsed_s == pytest.approx(2 * 2.0 + 4 * 0.5 + 2 * 0.25)

    def test_slot_matching_tolerance(self, core, layout):
        near = layout.slot_pose(1).lifted(0.0005)
        core.process(action_frame(move(near, "transit"), 1))
        replies = core.process({"type": "set_gripper", "seq": 2, "state": "close"})
        assert replies[-1]["type"] == "ack"
        assert core.held == 3

    def test_lifted_pose_is_not_at_slot(self, core, layout):
        above = layout.slot_pose(1).lifted(0.1)
        core.process(action_frame(move(above, "transit"), 1))
        replies = core.process({"type": "set_gripper", "seq": 2, "state": "close"})
        assert replies[-1]["reason"] == "not_at_slot"


class TestConservation:
    def test_fresh_world_is_consistent(self, world):
        assert part_conservation_error(world) is None

    def test_vanished_part_is_reported(self, world):
        world.magazine.discard(5)
        message = part_conservation_error(world)
        assert message is not None and "5" in message

    def test_duplicated_part_is_reported(self, world):
        world.delivery_zone.add(5)
        message = part_conservation_error(world)
        assert message is not None and "5" in message

    def test_held_part_balances_the_books(self, world):
        world.magazine.discard(5)
        assert part_conservation_error(world, held=5) is None

    def test_conservation_across_randomized_jobs(self, catalog, layout):
        rng = random.Random(2024)
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world)
        robot = InprocRobot(core)
        world.try_assemble(1, "bench")
        world.try_assemble(2, "bench")
        for _ in range(300):
            component = rng.choice(sorted(catalog.deliverable_ids))
            try:
                deliver_component(robot, component, layout, catalog)
            except NackReceived as exc:
                assert exc.reason == "empty_slot"
            if rng.random() < 0.5:
                from coassembly.catalog import feasible_set

                candidates = sorted(
                    world.delivery_zone & feasible_set(world.assembled, catalog)
                )
                if candidates:
                    world.try_assemble(candidates[0], ZONE_DELIVERY)
            assert part_conservation_error(world, held=core.held) is None


class TestTcpTransport:
    def test_full_job_over_real_sockets(self, catalog, layout):
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world)
        with TcpRobotServer(core) as server:
            host, port = server.address
            client = TcpRobotClient.open(host, port)
            try:
                report = deliver_component(client, 3, layout, catalog)
            finally:
                client.close()
        assert report.actions_completed == 8
        assert report.elapsed_s == pytest.approx(12.0)
        assert world.delivery_zone == {3}

    def test_second_client_is_refused_busy(self, catalog, layout):
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world)
        with TcpRobotServer(core) as server:
            host, port = server.address
            first = TcpRobotClient.open(host, port)
            try:
                with pytest.raises(NackReceived) as excinfo:
                    TcpRobotClient.open(host, port)
                assert excinfo.value.reason == "busy"
                status = first.hello()
                assert status.held is None
            finally:
                first.close()

    def test_new_client_after_disconnect(self, catalog, layout):
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world)
        with TcpRobotServer(core) as server:
            host, port = server.address
            first = TcpRobotClient.open(host, port)
            first.close()
            for _ in range(50):
                try:
                    second = TcpRobotClient.open(host, port)
                    break
                except NackReceived:
                    import time

                    time.sleep(0.02)
            else:
                pytest.fail("server never released the first connection")
            try:
                report = deliver_component(second, 4, layout, catalog)
                assert report.actions_completed == 8
            finally:
                second.close()

    def test_malformed_line_gets_parse_error_and_connection_survives(
        self, catalog, layout
    ):
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world)
        with TcpRobotServer(core) as server:
            host, port = server.address
            sock = socket.create_connection((host, port), timeout=5.0)
            reader = sock.makefile("rb")
            try:
                sock.sendall(b"{broken\n")
                reply = decode_frame(reader.readline())
                assert reply == {"type": "nack", "seq": None, "reason": "parse_error"}
                sock.sendall(encode_frame(hello_frame(1)))
                status = decode_frame(reader.readline())
                ack = decode_frame(reader.readline())
                assert status["type"] == "status"
                assert ack == {"type": "ack", "seq": 1, "elapsed_s": 0.0}
            finally:
                sock.close()

    def test_server_shutdown_surfaces_connection_lost(self, catalog, layout):
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world)
        server = TcpRobotServer(core).start()
        host, port = server.address
        client = TcpRobotClient(host, port)
        server.stop()
        with pytest.raises(ConnectionLost):
            client.hello()
        client.close()

    def test_silent_server_surfaces_timeout(self):
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        host, port = listener.getsockname()[:2]
        client = TcpRobotClient(host, port, timeout_s=0.2)
        try:
            with pytest.raises(CommandTimeout) as excinfo:
                client.hello()
            assert excinfo.value.seq == 1
        finally:
            client.close()
            listener.close()

    def test_mid_job_disconnect_reports_partial_progress(self, catalog, layout):
        world = WorldState(catalog)
        core = RobotSimCore(catalog, layout, world)
        server = TcpRobotServer(core).start()
        host, port = server.address
        client = TcpRobotClient.open(host, port)
        actions = generate_actions(3, layout, catalog)
        report = client.send_job(actions[:3])
        assert report.actions_completed == 3
        server.stop()
        with pytest.raises((ConnectionLost, CommandTimeout)) as excinfo:
            client.send_job(actions[3:])
        assert excinfo.value.report.actions_completed < len(actions[3:])
        client.close()

    def test_status_frame_shape(self):
        frame = status_frame("open", None, 12.5, "delivery")
        decoded = decode_frame(encode_frame(frame))
        assert decoded == {
            "type": "status",
            "gripper": "open",
            "held": None,
            "clock": 12.5,
            "at": "delivery",
        }
