"""End-to-end acceptance checks, one test per criterion.

Each test pins its tolerances and wall-clock budget inline.  The
operator console criterion lives in the frontend package and is covered
by its own end-to-end test there, not here.
"""

import random
import time

from coassembly.catalog import BeliefState, default_catalog, update_available, validate_sequence
from coassembly.detection import (
    ComponentNoise,
    ImageSpec,
    NoiseModel,
    OracleDetector,
    estimate_image_tokens,
)
from coassembly.detection.logs import LogRow
from coassembly.evalharness import (
    compute_pr,
    load_experiment_spec,
    run_experiment1,
    run_experiment2,
    run_experiment3,
    run_pr_report,
)
from coassembly.orchestrator import SessionConfig, run_session
from coassembly.planner import default_layout, deliverable_candidates, plan_next_reference
from coassembly.robolink import (
    InprocRobot,
    RobotSimCore,
    TcpRobotClient,
    TcpRobotServer,
    decode_frame,
    deliver_component,
    encode_frame,
    part_conservation_error,
)
from coassembly.workcell import WorldState

CATALOG = default_catalog()
LAYOUT = default_layout()


def test_c01_reference_orders_validate():
    """Known-good orders pass, precedence violations fail, within 1 s."""
    start = time.perf_counter()
    good = [
        (1, 2, 3, 4, 5, 6, 7, 8, 9),
        (1, 2, 3, 4, 8, 5, 6, 7, 9),
        (1, 2, 3, 4, 8, 6, 5, 7, 9),
        (1, 2, 3, 4, 6, 7, 8, 5, 9),
    ]
    for order in good:
        verdict = validate_sequence(order, CATALOG)
        assert verdict.ok, order
    bad = [
        (2, 1, 3, 4, 5, 6, 7, 8, 9),
        (1, 3, 2, 4, 5, 6, 7, 8, 9),
        (1, 2, 4, 3, 5, 6, 7, 8, 9),
        (1, 2, 3, 5, 4, 6, 7, 8, 9),
        (1, 2, 3, 4, 9, 5, 6, 7, 8),
    ]
    for order in bad:
        verdict = validate_sequence(order, CATALOG)
        assert not verdict.ok, order
        assert verdict.violation_index is not None
        assert verdict.missing
    assert time.perf_counter() - start < 1.0


def test_c02_happy_path_seven_deliveries():
    """100/100 clean sessions finish in exactly 7 iterations, within 5 s."""
    start = time.perf_counter()
    for seed in range(100):
        result = run_session(
            CATALOG, OracleDetector(CATALOG), config=SessionConfig(seed=seed)
        )
        assert result.success
        assert result.termination == "completed"
        assert result.iterations == 7
        assert result.deliveries == 7
        assert result.detector_calls == 7
        assert result.realized_sequence == (1, 2, 3, 4, 5, 6, 7, 8, 9)
    assert time.perf_counter() - start < 5.0


def test_c03_deviation_scripts_all_recover():
    """Every scripted deviation is absorbed and re-planned, within 10 s."""
    start = time.perf_counter()
    outcome = run_experiment2(load_experiment_spec("experiment2"))
    assert len(outcome.rows) == 16
    for row in outcome.rows:
        assert row.success, row.name
        assert row.order_valid, row.name
        assert row.realized == row.expected, row.name
    assert time.perf_counter() - start < 10.0


def test_c04_sticky_deadlocks_transient_recovers():
    """Sticky hallucination always deadlocks, light transient noise never
    costs the session, within 10 s."""
    start = time.perf_counter()
    sticky = NoiseModel(
        components={7: ComponentNoise(fp_rate=1.0, persistence="sticky")}
    )
    for seed in range(100):
        result = run_session(
            CATALOG,
            OracleDetector(CATALOG, sticky, seed=seed),
            config=SessionConfig(seed=seed),
        )
        assert result.termination == "deadlock", seed
        assert not result.success
        assert 7 not in result.realized_sequence
        assert 9 not in result.realized_sequence

    rng = random.Random(404)
    for seed in range(100):
        flips = {}
        for _ in range(rng.randint(1, 2)):
            flips[(rng.randint(0, 5), rng.randint(3, 9))] = rng.random() < 0.5
        result = run_session(
            CATALOG,
            OracleDetector(CATALOG, seed=seed, scripted_flips=flips),
            config=SessionConfig(seed=seed),
        )
        assert result.success, (seed, flips)
    assert time.perf_counter() - start < 10.0


def test_c05_monte_carlo_success_rate():
    """1000 noisy sessions land within 0.83 +/- 0.04, within 60 s."""
    start = time.perf_counter()
    outcome = run_experiment1(load_experiment_spec("experiment1"))
    assert outcome.sessions == 1000
    assert abs(outcome.success_rate - 0.8333) <= 0.04, outcome.successes
    for pattern in outcome.patterns:
        assert pattern.matched, pattern.name
    assert time.perf_counter() - start < 60.0


def test_c06_image_token_estimates():
    """High detail 680x480 costs 425 tokens, low detail 85."""
    assert estimate_image_tokens(ImageSpec(680, 480, "high")) == 425
    assert estimate_image_tokens(ImageSpec(680, 480, "low")) == 85


def test_c07_detection_benchmark_scoring(tmp_path):
    """Pinned precision/recall for both packaged logs, then a randomized
    brute-force recount over 50 generated logs."""
    results = run_pr_report(load_experiment_spec("pr_logs"), out_dir=tmp_path)
    wheel = results["finetuned"][8]
    assert (wheel.tp, wheel.fp, wheel.fn) == (10, 0, 1)
    assert wheel.precision == 1.0
    assert round(wheel.recall, 2) == 0.91
    motor = results["vild"][3]
    assert (motor.tp, motor.fp, motor.fn) == (0, 0, 15)
    assert motor.precision is None
    assert motor.recall == 0.0

    rng = random.Random(77)
    for _ in range(50):
        rows = [
            LogRow(
                test_id=f"t{i}",
                component=rng.randint(1, 5),
                ground_truth=rng.random() < 0.6,
                predicted=rng.random() < 0.6,
            )
            for i in range(rng.randint(5, 200))
        ]
        scores = compute_pr(rows)
        for cid, score in scores.items():
            subset = [r for r in rows if r.component == cid]
            tp = sum(r.ground_truth and r.predicted for r in subset)
            fp = sum(not r.ground_truth and r.predicted for r in subset)
            fn = sum(r.ground_truth and not r.predicted for r in subset)
            assert (score.tp, score.fp, score.fn) == (tp, fp, fn)
            assert score.precision == (tp / (tp + fp) if tp + fp else None)
            assert score.recall == (tp / (tp + fn) if tp + fn else None)


def test_c08_belief_invariants_and_planner_safety():
    """10000 randomized belief updates keep the three-set partition exact;
    the planner never proposes an infeasible component over the full
    state space."""
    ids = CATALOG.ids
    rng = random.Random(90125)
    belief = BeliefState.fresh(CATALOG)
    for _ in range(10_000):
        detected = frozenset(cid for cid in ids if rng.random() < 0.5)
        brought_now = [cid for cid in ids if rng.random() < 0.2]
        previous_brought = belief.brought
        if rng.random() < 0.5:
            belief = belief.with_detection(detected)
            assert belief.brought == previous_brought
        else:
            belief = belief.with_brought(brought_now)
            assert belief.brought == previous_brought | frozenset(brought_now)
        assert belief.available == belief.initial - (belief.detected | belief.brought)
        assert belief.available <= belief.initial
        assert not belief.available & belief.brought
        assert not belief.available & belief.detected
        recomputed = update_available(belief)
        assert recomputed == belief

    id_list = sorted(ids)
    deliverable = sorted(CATALOG.deliverable_ids)
    for detected_mask in range(2 ** len(id_list)):
        detected = frozenset(
            cid for bit, cid in enumerate(id_list) if detected_mask >> bit & 1
        )
        for brought_mask in range(2 ** len(deliverable)):
            brought = frozenset(
                cid for bit, cid in enumerate(deliverable) if brought_mask >> bit & 1
            )
            belief = update_available(
                BeliefState(detected, brought, frozenset(), ids)
            )
            decision = plan_next_reference(belief, CATALOG)
            choice = decision.next_component
            if choice is None:
                assert not deliverable_candidates(belief, CATALOG)
                continue
            assert choice in belief.available
            assert CATALOG[choice].robot_deliverable
            assert CATALOG.prerequisites(choice) <= belief.detected
            assert choice not in belief.detected
            assert choice not in belief.brought


def test_c09_wire_protocol_and_part_conservation():
    """Frames survive a byte round trip, a delivery over real TCP acks all
    8 actions in 12 s of simulated time, and 1000 in-process jobs never
    create or destroy a part."""
    frames = [
        {"type": "hello", "seq": 1, "client": "probe"},
        {"type": "ack", "seq": 4, "elapsed_s": 3.0},
        {"type": "nack", "seq": None, "reason": "parse_error"},
        {"type": "status", "gripper": "open", "held": None, "clock": 1.5, "at": "slot:2"},
    ]
    for frame in frames:
        assert decode_frame(encode_frame(frame)) == frame

    world = WorldState(CATALOG)
    core = RobotSimCore(CATALOG, LAYOUT, world)
    with TcpRobotServer(core) as server:
        client = TcpRobotClient.open(*server.address)
        try:
            report = deliver_component(client, 3, LAYOUT, CATALOG)
        finally:
            client.close()
    assert report.actions_completed == 8
    assert report.elapsed_s == 12.0
    with world.lock:
        assert world.delivery_zone == {3}

    rng = random.Random(5150)
    jobs = 0
    while jobs < 1000:
        world = WorldState(CATALOG)
        robot = InprocRobot(RobotSimCore(CATALOG, LAYOUT, world))
        while jobs < 1000:
            with world.lock:
                in_magazine = sorted(world.magazine)
            if not in_magazine:
                break
            deliver_component(robot, rng.choice(in_magazine), LAYOUT, CATALOG)
            jobs += 1
            if rng.random() < 0.5:
                with world.lock:
                    zone = sorted(world.delivery_zone)
                if zone:
                    world.try_assemble(rng.choice(zone), origin="delivery")
            assert part_conservation_error(world) is None


def test_c10_completion_time_study():
    """Guided mean inside [263, 346] s, tighter spread than manual, at
    least a 25 percent reduction, within 10 s."""
    start = time.perf_counter()
    outcome = run_experiment3(load_experiment_spec("experiment3"))
    assert len(outcome.guided_times) == 10
    assert len(outcome.manual_times) == 10
    assert 263.0 <= outcome.guided_mean <= 346.0
    assert outcome.guided_std < outcome.manual_std
    assert outcome.reduction_pct >= 25.0
    assert time.perf_counter() - start < 10.0
