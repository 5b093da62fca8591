"""Robot wire protocol, simulated robot, TCP server, and client.

The protocol is newline-delimited JSON.  Every command frame (hello,
move_to, set_gripper) carries a strictly increasing integer ``seq``; the
robot answers each command with exactly one terminal frame, an ack or a
nack echoing that seq.  Informational status frames may precede the
terminal frame, never follow it, so a client can read until it sees the
ack or nack and know the exchange is over.

``RobotSimCore`` holds the robot-side semantics once; the TCP server and
the in-process client are thin transports around it.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
from dataclasses import dataclass
from typing import Mapping, Sequence

from .catalog import Catalog, ComponentId
from .planner import (
    APPROACH,
    GRIPPER_CLOSE,
    GRIPPER_OPEN,
    MOVE_TO,
    SET_GRIPPER,
    TRANSIT,
    MagazineLayout,
    Pose,
    RobotAction,
    generate_actions,
)
from .workcell import WorldState

log = logging.getLogger(__name__)

SLOT_TOLERANCE_M = 0.001

FRAME_HELLO = "hello"
FRAME_MOVE_TO = "move_to"
FRAME_SET_GRIPPER = "set_gripper"
FRAME_ACK = "ack"
FRAME_NACK = "nack"
FRAME_STATUS = "status"

COMMAND_TYPES = frozenset({FRAME_HELLO, FRAME_MOVE_TO, FRAME_SET_GRIPPER})
TERMINAL_TYPES = frozenset({FRAME_ACK, FRAME_NACK})
FRAME_TYPES = COMMAND_TYPES | TERMINAL_TYPES | {FRAME_STATUS}

NACK_BUSY = "busy"
NACK_PARSE_ERROR = "parse_error"
NACK_BAD_FRAME = "bad_frame"
NACK_SEQ_ORDER = "seq_order"
NACK_EMPTY_SLOT = "empty_slot"
NACK_NOT_AT_SLOT = "not_at_slot"
NACK_NOT_AT_DELIVERY = "not_at_delivery"
NACK_GRIPPER_OCCUPIED = "gripper_occupied"


class RobotLinkError(Exception):
    """Base for robot protocol and transport failures."""


class FrameError(RobotLinkError):
    """A line on the wire is not a valid protocol frame."""


@dataclass(frozen=True)
class RobotStatus:
    gripper: str
    held: ComponentId | None
    clock: float
    at: str | None


@dataclass(frozen=True)
class JobReport:
    """Outcome of a (possibly partial) action sequence."""

    actions_completed: int
    elapsed_s: float
    statuses: tuple[RobotStatus, ...] = ()


class ConnectionLost(RobotLinkError):
    def __init__(self, report: JobReport | None = None):
        self.report = report or JobReport(0, 0.0)
        super().__init__(
            f"connection lost after {self.report.actions_completed} completed actions"
        )


class CommandTimeout(RobotLinkError):
    def __init__(self, seq: int | None, report: JobReport | None = None):
        self.seq = seq
        self.report = report or JobReport(0, 0.0)
        super().__init__(f"no reply to command seq={seq}")


class NackReceived(RobotLinkError):
    def __init__(self, seq: int | None, reason: str, report: JobReport | None = None):
        self.seq = seq
        self.reason = reason
        self.report = report or JobReport(0, 0.0)
        super().__init__(f"command seq={seq} refused: {reason}")


def encode_frame(frame: Mapping) -> bytes:
    """Serialize one frame as a compact JSON line."""
    return json.dumps(dict(frame), separators=(",", ":"), sort_keys=True).encode() + b"\n"


def decode_frame(line: bytes | str) -> dict:
    """Parse one line into a frame, or raise FrameError."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError(f"frame is not UTF-8: {exc}") from exc
    try:
        frame = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameError(f"frame is not JSON: {exc}") from exc
    if not isinstance(frame, dict):
        raise FrameError("frame must be a JSON object")
    ftype = frame.get("type")
    if ftype not in FRAME_TYPES:
        raise FrameError(f"unknown frame type {ftype!r}")
    return frame


def hello_frame(seq: int, client: str = "coassembly") -> dict:
    return {"type": FRAME_HELLO, "seq": seq, "client": client}


def ack_frame(seq: int, elapsed_s: float) -> dict:
    return {"type": FRAME_ACK, "seq": seq, "elapsed_s": elapsed_s}


def nack_frame(seq: int | None, reason: str) -> dict:
    return {"type": FRAME_NACK, "seq": seq, "reason": reason}


def status_frame(gripper: str, held: ComponentId | None, clock: float, at: str | None) -> dict:
    return {"type": FRAME_STATUS, "gripper": gripper, "held": held, "clock": clock, "at": at}


def action_frame(action: RobotAction, seq: int) -> dict:
    """Encode one planned robot action as a command frame."""
    if action.kind == MOVE_TO:
        return {
            "type": FRAME_MOVE_TO,
            "seq": seq,
            "position": list(action.pose.position),
            "orientation": list(action.pose.orientation),
            "speed_class": action.speed_class,
        }
    if action.kind == SET_GRIPPER:
        return {"type": FRAME_SET_GRIPPER, "seq": seq, "state": action.gripper}
    raise FrameError(f"cannot encode action kind {action.kind!r}")


def status_from_frame(frame: Mapping) -> RobotStatus:
    return RobotStatus(
        gripper=str(frame.get("gripper", "")),
        held=frame.get("held"),
        clock=float(frame.get("clock", 0.0)),
        at=frame.get("at"),
    )


@dataclass(frozen=True)
class CycleTimes:
    """Seconds charged per executed command, by motion class."""

    transit: float = 3.0
    approach: float = 1.0
    gripper: float = 1.0

    def for_speed_class(self, speed_class: str) -> float | None:
        return {TRANSIT: self.transit, APPROACH: self.approach}.get(speed_class)


class RobotSimCore:
    """Executes command frames against the shared world.

    Picks a part when the gripper closes within ``SLOT_TOLERANCE_M`` of a
    stocked magazine slot; drops it when the gripper opens at the delivery
    pose.  A refused command (nack) changes nothing and costs no time.
    """

    def __init__(
        self,
        catalog: Catalog,
        layout: MagazineLayout,
        world: WorldState,
        cycle_times: CycleTimes | None = None,
    ):
        self.catalog = catalog
        self.layout = layout
        self.world = world
        self.cycle_times = cycle_times or CycleTimes()
        self.pose: Pose | None = None
        self.gripper = GRIPPER_OPEN
        self.held: ComponentId | None = None
        self._last_seq = 0
        self._lock = threading.Lock()
        self._slot_components = {
            spec.magazine_slot: spec.id
            for spec in catalog
            if spec.robot_deliverable and spec.magazine_slot is not None
        }

    def begin_session(self) -> None:
        """Reset the per-connection seq watermark (robot state persists)."""
        with self._lock:
            self._last_seq = 0

    def process(self, frame: Mapping) -> list[dict]:
        """Handle one command frame; the last reply is always ack or nack."""
        with self._lock:
            ftype = frame.get("type")
            if ftype not in COMMAND_TYPES:
                return [nack_frame(frame.get("seq"), NACK_BAD_FRAME)]
            seq = frame.get("seq")
            if not isinstance(seq, int) or isinstance(seq, bool):
                return [nack_frame(None, NACK_BAD_FRAME)]
            if seq <= self._last_seq:
                return [nack_frame(seq, NACK_SEQ_ORDER)]
            self._last_seq = seq
            if ftype == FRAME_HELLO:
                return [self._status(), ack_frame(seq, 0.0)]
            if ftype == FRAME_MOVE_TO:
                return self._handle_move(seq, frame)
            return self._handle_gripper(seq, frame)

    def _status(self) -> dict:
        with self.world.lock:
            clock = self.world.clock
        return status_frame(self.gripper, self.held, clock, self._location_label())

    def _location_label(self) -> str | None:
        if self.pose is None:
            return None
        slot = self._slot_at(self.pose)
        if slot is not None:
            return f"slot:{slot}"
        if self._at_delivery(self.pose):
            return "delivery"
        return None

    def _slot_at(self, pose: Pose) -> int | None:
        for slot, slot_pose in self.layout.slots.items():
            if pose.distance_to(slot_pose) <= SLOT_TOLERANCE_M:
                return slot
        return None

    def _at_delivery(self, pose: Pose) -> bool:
        return pose.distance_to(self.layout.delivery_pose) <= SLOT_TOLERANCE_M

    def _handle_move(self, seq: int, frame: Mapping) -> list[dict]:
        position = frame.get("position")
        orientation = frame.get("orientation", [1.0, 0.0, 0.0, 0.0])
        speed_class = frame.get("speed_class")
        elapsed = self.cycle_times.for_speed_class(speed_class)
        if (
            not isinstance(position, list) or len(position) != 3
            or not isinstance(orientation, list) or len(orientation) != 4
            or elapsed is None
        ):
            return [nack_frame(seq, NACK_BAD_FRAME)]
        try:
            pose = Pose(
                position=tuple(float(v) for v in position),
                orientation=tuple(float(v) for v in orientation),
            )
        except (TypeError, ValueError):
            return [nack_frame(seq, NACK_BAD_FRAME)]
        self.pose = pose
        self.world.advance_clock(elapsed)
        return [ack_frame(seq, elapsed)]

    def _handle_gripper(self, seq: int, frame: Mapping) -> list[dict]:
        state = frame.get("state")
        if state not in (GRIPPER_OPEN, GRIPPER_CLOSE):
            return [nack_frame(seq, NACK_BAD_FRAME)]
        if state == GRIPPER_CLOSE:
            return self._close_gripper(seq)
        return self._open_gripper(seq)

    def _close_gripper(self, seq: int) -> list[dict]:
        if self.held is not None:
            return [nack_frame(seq, NACK_GRIPPER_OCCUPIED)]
        slot = self._slot_at(self.pose) if self.pose is not None else None
        if slot is None:
            return [nack_frame(seq, NACK_NOT_AT_SLOT)]
        component = self._slot_components.get(slot)
        with self.world.lock:
            if component is None or component not in self.world.magazine:
                return [nack_frame(seq, NACK_EMPTY_SLOT)]
            self.world.magazine.discard(component)
        self.held = component
        self.gripper = GRIPPER_CLOSE
        self.world.advance_clock(self.cycle_times.gripper)
        return [self._status(), ack_frame(seq, self.cycle_times.gripper)]

    def _open_gripper(self, seq: int) -> list[dict]:
        if self.held is not None:
            if self.pose is None or not self._at_delivery(self.pose):
                return [nack_frame(seq, NACK_NOT_AT_DELIVERY)]
            with self.world.lock:
                self.world.delivery_zone.add(self.held)
            self.held = None
        self.gripper = GRIPPER_OPEN
        self.world.advance_clock(self.cycle_times.gripper)
        return [self._status(), ack_frame(seq, self.cycle_times.gripper)]


def part_conservation_error(world: WorldState, held: ComponentId | None = None) -> str | None:
    """Check that every deliverable part sits in exactly one place.

    Returns a description of the violation, or None when the magazine,
    the delivery zone, the gripper, and the assembled set partition the
    deliverable ids.
    """
    with world.lock:
        regions = {
            "magazine": set(world.magazine),
            "delivery_zone": set(world.delivery_zone),
            "assembled": set(world.assembled) & world.catalog.deliverable_ids,
        }
    if held is not None:
        regions["held"] = {held}
    union: set[ComponentId] = set()
    for name, parts in regions.items():
        overlap = union & parts
        if overlap:
            return f"parts {sorted(overlap)} appear in {name} and elsewhere"
        union |= parts
    expected = set(world.catalog.deliverable_ids)
    if union != expected:
        lost = sorted(expected - union)
        extra = sorted(union - expected)
        return f"lost parts {lost}, unexpected parts {extra}"
    return None


class _RobotClientBase:
    """Shared hello and job-driving logic over an abstract exchange."""

    def __init__(self) -> None:
        self._seq = 0

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _exchange(self, frame: dict) -> list[dict]:
        raise NotImplementedError

    def hello(self, client: str = "coassembly") -> RobotStatus:
        frames = self._exchange(hello_frame(self._next_seq(), client))
        terminal = frames[-1]
        if terminal["type"] == FRAME_NACK:
            raise NackReceived(terminal.get("seq"), terminal.get("reason", "unknown"))
        for frame in frames:
            if frame["type"] == FRAME_STATUS:
                return status_from_frame(frame)
        raise FrameError("hello ack arrived without a status frame")

    def send_job(self, actions: Sequence[RobotAction]) -> JobReport:
        """Run the actions one command at a time, one ack per command.

        On any failure the raised error carries a report of how far the
        job got, so the caller can account for partially elapsed time.
        """
        completed = 0
        elapsed = 0.0
        statuses: list[RobotStatus] = []

        def report() -> JobReport:
            return JobReport(completed, elapsed, tuple(statuses))

        for action in actions:
            seq = self._next_seq()
            try:
                frames = self._exchange(action_frame(action, seq))
            except ConnectionLost:
                raise ConnectionLost(report()) from None
            except CommandTimeout:
                raise CommandTimeout(seq, report()) from None
            for frame in frames:
                if frame["type"] == FRAME_STATUS:
                    statuses.append(status_from_frame(frame))
            terminal = frames[-1]
            if terminal["type"] == FRAME_NACK:
                raise NackReceived(
                    terminal.get("seq"), terminal.get("reason", "unknown"), report()
                )
            completed += 1
            elapsed += float(terminal.get("elapsed_s", 0.0))
        return report()


class InprocRobot(_RobotClientBase):
    """Drives a RobotSimCore directly, no sockets involved.

    Protocol-equivalent to the TCP path; used where session volume makes
    real sockets pointless overhead.
    """

    def __init__(self, core: RobotSimCore):
        super().__init__()
        self.core = core
        core.begin_session()

    def _exchange(self, frame: dict) -> list[dict]:
        return self.core.process(frame)

    def close(self) -> None:
        pass


class TcpRobotClient(_RobotClientBase):
    """Talks to a robot server over a line-oriented TCP socket."""

    def __init__(self, host: str, port: int, timeout_s: float = 5.0):
        super().__init__()
        self._sock = socket.create_connection((host, port), timeout=timeout_s)
        self._reader = self._sock.makefile("rb")

    @classmethod
    def open(cls, host: str, port: int, timeout_s: float = 5.0) -> "TcpRobotClient":
        client = cls(host, port, timeout_s=timeout_s)
        try:
            client.hello()
        except Exception:
            client.close()
            raise
        return client

    def _exchange(self, frame: dict) -> list[dict]:
        try:
            self._sock.sendall(encode_frame(frame))
        except OSError:
            raise ConnectionLost() from None
        frames: list[dict] = []
        while True:
            try:
                line = self._reader.readline()
            except socket.timeout:
                raise CommandTimeout(frame.get("seq")) from None
            except OSError:
                raise ConnectionLost() from None
            if not line:
                raise ConnectionLost()
            reply = decode_frame(line)
            frames.append(reply)
            if reply["type"] in TERMINAL_TYPES:
                return frames

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()


class TcpRobotServer:
    """Single-client TCP front end for a RobotSimCore.

    A second concurrent connection gets its first command refused with a
    busy nack and is then closed.  A malformed line costs a parse_error
    nack but keeps the connection alive.
    """

    def __init__(self, core: RobotSimCore, host: str = "127.0.0.1", port: int = 0):
        self.core = core
        self._host = host
        self._port = port
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._gate = threading.Lock()
        self._active: socket.socket | None = None
        self._closing = False

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RobotLinkError("server is not running")
        return self._listener.getsockname()[:2]

    def start(self) -> "TcpRobotServer":
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self._host, self._port))
        self._listener.listen(4)
        self._listener.settimeout(0.1)
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="robot-accept", daemon=True
        )
        self._accept_thread.start()
        log.info("robot server listening on %s:%s", *self.address)
        return self

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            ).start()

    def _serve_connection(self, conn: socket.socket) -> None:
        with self._gate:
            busy = self._active is not None
            if not busy:
                self._active = conn
        if busy:
            self._refuse_busy(conn)
            return
        try:
            self.core.begin_session()
            reader = conn.makefile("rb")
            for line in reader:
                try:
                    frame = decode_frame(line)
                except FrameError as exc:
                    log.warning("dropping malformed frame: %s", exc)
                    conn.sendall(encode_frame(nack_frame(None, NACK_PARSE_ERROR)))
                    continue
                for reply in self.core.process(frame):
                    conn.sendall(encode_frame(reply))
        except OSError:
            pass
        finally:
            with self._gate:
                self._active = None
            try:
                conn.close()
            except OSError:
                pass

    def _refuse_busy(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(5.0)
            line = conn.makefile("rb").readline()
            seq = None
            if line:
                try:
                    seq = decode_frame(line).get("seq")
                except FrameError:
                    seq = None
            conn.sendall(encode_frame(nack_frame(seq, NACK_BUSY)))
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def stop(self) -> None:
        self._closing = True
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._gate:
            active = self._active
        if active is not None:
            try:
                active.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                active.close()
            except OSError:
                pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)

    def __enter__(self) -> "TcpRobotServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def deliver_component(
    client: _RobotClientBase,
    component: ComponentId,
    layout: MagazineLayout,
    catalog: Catalog,
) -> JobReport:
    """Plan and run the standard pick-and-place job for one component."""
    actions = generate_actions(component, layout, catalog)
    return client.send_job(actions)
