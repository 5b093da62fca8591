"""Command line entry points.

Subcommands:

* ``run``     one guided assembly session against the simulated workcell
* ``resume``  continue a persisted session from its step log
* ``eval``    the packaged experiments (e1, e2, e3, pr)
* ``console`` serve the interactive operator gateway over HTTP
* ``robot``   serve a standalone robot cell over TCP
* ``tokens``  image token cost estimate for a detector request
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
import threading
from importlib import resources
from pathlib import Path

from . import evalharness
from .catalog import Catalog, CatalogError, default_catalog, load_catalog_file
from .detection import NoiseModel, OracleDetector
from .detection.backends import HttpChatDetector, RecordingDetector, ReplayDetector
from .detection.prompts import ImageSpec, estimate_image_tokens
from .evalharness import ExperimentSpecError, load_experiment_spec
from .llm import LlmError
from .orchestrator import (
    OrchestratorError,
    SessionConfig,
    SessionResult,
    resume_session,
    run_session,
)
from .planner import ChatPlanner, MagazineLayout, default_layout
from .robolink import RobotLinkError, RobotSimCore, TcpRobotClient, TcpRobotServer
from .workcell import (
    OperatorAgent,
    OperatorPolicy,
    PolicyConfigError,
    TimeModel,
    WorldState,
)

log = logging.getLogger(__name__)

SCENARIO_DATA_DIR = "data/scenarios"


def load_scenario(name_or_path: str) -> dict:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    packaged = resources.files("coassembly") / SCENARIO_DATA_DIR / f"{name_or_path}.json"
    try:
        return json.loads(packaged.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ExperimentSpecError(
            f"no scenario named {name_or_path!r} and no such file"
        ) from None


def _build_catalog(scenario: dict) -> Catalog:
    catalog_file = scenario.get("catalog_file")
    if catalog_file:
        return load_catalog_file(catalog_file)
    return default_catalog()


def _build_detector(args, catalog: Catalog, scenario: dict, seed: int | None):
    choice = args.detector
    if choice == "oracle":
        noise = NoiseModel.from_document(scenario.get("noise", {}))
        backend = OracleDetector(catalog, noise, seed=seed)
    elif choice == "llm":
        backend = HttpChatDetector(catalog)
    elif choice.startswith("replay:"):
        backend = ReplayDetector(choice.split(":", 1)[1], catalog)
    else:
        raise ExperimentSpecError(
            f"unknown detector {choice!r}; expected oracle, llm or replay:FILE"
        )
    if getattr(args, "record", None):
        backend = RecordingDetector(backend, args.record, catalog)
    return backend


def _build_planner(args):
    if args.planner == "llm":
        return ChatPlanner()
    return None


def _build_operator(args, catalog: Catalog, scenario: dict, seed: int | None):
    choice = getattr(args, "operator", None)
    if choice is None or choice == "scenario":
        policy = OperatorPolicy.from_document(scenario.get("operator", {}))
    elif choice == "compliant":
        policy = OperatorPolicy(kind="compliant")
    elif choice == "random":
        policy = OperatorPolicy(kind="seeded_random", seed=seed or 0)
    elif choice.startswith("script:"):
        entries = json.loads(Path(choice.split(":", 1)[1]).read_text(encoding="utf-8"))
        policy = OperatorPolicy(
            kind="deviate_script",
            script=tuple((int(p), int(c)) for p, c in entries),
        )
    else:
        raise ExperimentSpecError(
            f"unknown operator {choice!r}; expected compliant, random or script:FILE"
        )
    policy.validated_against(catalog)
    return OperatorAgent(policy, catalog)


def _session_config(args, scenario: dict, seed: int | None) -> SessionConfig:
    session = scenario.get("session", {})
    max_iterations = args.max_iterations or int(session.get("max_iterations", 20))
    stall_limit = args.stall_limit or int(session.get("stall_limit", 3))
    return SessionConfig(
        max_iterations=max_iterations,
        stall_limit=stall_limit,
        seed=seed,
        persist_dir=getattr(args, "out", None),
    )


def _print_result(result: SessionResult, as_json: bool) -> None:
    if as_json:
        print(json.dumps(result.to_document(), indent=2, sort_keys=True))
        return
    print(f"termination: {result.termination}")
    print(f"success: {str(result.success).lower()}")
    print(f"iterations: {result.iterations}")
    print(f"detector calls: {result.detector_calls}")
    print(f"deliveries: {result.deliveries}")
    print(f"realized order: {' '.join(str(c) for c in result.realized_sequence)}")
    print(f"elapsed: {result.elapsed_s:.1f} s")
    if result.failure_detail:
        print(f"detail: {result.failure_detail}")


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    catalog = _build_catalog(scenario)
    layout = default_layout()
    seed = args.seed
    detector = _build_detector(args, catalog, scenario, seed)
    planner = _build_planner(args)
    operator = _build_operator(args, catalog, scenario, seed)
    config = _session_config(args, scenario, seed)
    time_model = TimeModel.from_document(scenario.get("time_model", {}))

    if args.transport == "tcp":
        result = _run_over_tcp(
            catalog, detector, planner, operator, layout, config, time_model
        )
    else:
        result = run_session(
            catalog,
            detector,
            planner,
            operator=operator,
            layout=layout,
            config=config,
            time_model=time_model,
        )
    _print_result(result, args.json)
    if args.out:
        print(f"step log written under {args.out}", file=sys.stderr)
    return 0 if result.success else 1


def _run_over_tcp(
    catalog, detector, planner, operator, layout: MagazineLayout, config, time_model
) -> SessionResult:
    """Run one session with the robot driven over a real loopback socket."""
    world = WorldState(catalog)
    core = RobotSimCore(catalog, layout, world)
    with TcpRobotServer(core) as server:
        client = TcpRobotClient.open(*server.address)
        try:
            return run_session(
                catalog,
                detector,
                planner,
                operator=operator,
                world=world,
                robot=client,
                layout=layout,
                config=config,
                time_model=time_model,
            )
        finally:
            client.close()


def cmd_resume(args) -> int:
    scenario = load_scenario(args.scenario)
    catalog = _build_catalog(scenario)
    seed = args.seed
    detector = _build_detector(args, catalog, scenario, seed)
    policy = OperatorPolicy.from_document(scenario.get("operator", {}))
    config = SessionConfig(
        max_iterations=args.max_iterations or int(scenario.get("session", {}).get("max_iterations", 20)),
        stall_limit=args.stall_limit or int(scenario.get("session", {}).get("stall_limit", 3)),
        seed=seed,
        persist_dir=args.dir,
    )
    result = resume_session(
        args.dir,
        catalog,
        detector,
        policy=policy,
        config=config,
        time_model=TimeModel.from_document(scenario.get("time_model", {})),
    )
    _print_result(result, args.json)
    return 0 if result.success else 1


def cmd_eval(args) -> int:
    spec_source = args.spec or {
        "e1": "experiment1",
        "e2": "experiment2",
        "e3": "experiment3",
        "pr": "pr_logs",
    }[args.name]
    spec = load_experiment_spec(spec_source)
    if args.name == "e1":
        result = evalharness.run_experiment1(spec, out_dir=args.out)
        print(result.to_markdown())
        return 0 if all(p.matched for p in result.patterns) else 1
    if args.name == "e2":
        result = evalharness.run_experiment2(spec, out_dir=args.out)
        print(result.to_markdown())
        return 0 if result.all_succeeded else 1
    if args.name == "e3":
        result = evalharness.run_experiment3(spec, out_dir=args.out)
        print(result.to_markdown())
        return 0
    out_dir = args.out or tempfile.mkdtemp(prefix="coassembly-pr-")
    evalharness.run_pr_report(spec, out_dir=out_dir)
    print((Path(out_dir) / "precision_recall.md").read_text(encoding="utf-8"))
    return 0


def cmd_console(args) -> int:
    from .gateway import GatewayConfig, SessionService, serve

    catalog = default_catalog()
    service = SessionService(
        catalog,
        OracleDetector(catalog, seed=args.seed),
        config=GatewayConfig(
            seed=args.seed,
            max_iterations=args.max_iterations or 30,
            stall_limit=args.stall_limit or 5,
        ),
    )
    print(f"operator console gateway on http://{args.host}:{args.port}")
    print("POST /session/operator-action to act; GET /session/events for the stream")
    serve(service, host=args.host, port=args.port)
    return 0


def cmd_robot(args) -> int:
    host, _, port_text = args.listen.partition(":")
    catalog = default_catalog()
    world = WorldState(catalog)
    core = RobotSimCore(catalog, default_layout(), world)
    server = TcpRobotServer(core, host=host or "127.0.0.1", port=int(port_text or 0))
    server.start()
    bound_host, bound_port = server.address
    print(f"robot cell listening on {bound_host}:{bound_port}")
    print('newline-delimited JSON frames; start with {"type":"hello","seq":1}')
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def cmd_tokens(args) -> int:
    spec = ImageSpec(width=args.width, height=args.height, detail=args.detail)
    print(estimate_image_tokens(spec))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coassembly",
        description="Guided human-robot assembly sessions in a simulated workcell.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one assembly session")
    run_p.add_argument("--scenario", default="default", help="packaged name or JSON file")
    run_p.add_argument(
        "--detector", default="oracle", help="oracle, llm or replay:FILE"
    )
    run_p.add_argument("--record", help="record detector traffic to FILE for replay")
    run_p.add_argument("--planner", default="reference", choices=["reference", "llm"])
    run_p.add_argument(
        "--operator",
        default="scenario",
        help="scenario, compliant, random or script:FILE",
    )
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", help="directory for the step log and result")
    run_p.add_argument("--transport", default="inproc", choices=["inproc", "tcp"])
    run_p.add_argument("--max-iterations", type=int, default=None)
    run_p.add_argument("--stall-limit", type=int, default=None)
    run_p.add_argument("--json", action="store_true", help="print the result as JSON")
    run_p.set_defaults(handler=cmd_run)

    resume_p = sub.add_parser("resume", help="continue a persisted session")
    resume_p.add_argument("dir", help="directory holding steps.ndjson")
    resume_p.add_argument("--scenario", default="default")
    resume_p.add_argument("--detector", default="oracle")
    resume_p.add_argument("--seed", type=int, default=None)
    resume_p.add_argument("--max-iterations", type=int, default=None)
    resume_p.add_argument("--stall-limit", type=int, default=None)
    resume_p.add_argument("--json", action="store_true")
    resume_p.set_defaults(handler=cmd_resume)

    eval_p = sub.add_parser("eval", help="run a packaged experiment")
    eval_p.add_argument("name", choices=["e1", "e2", "e3", "pr"])
    eval_p.add_argument("--spec", help="override the packaged spec with a JSON file")
    eval_p.add_argument("--out", help="directory for result tables")
    eval_p.set_defaults(handler=cmd_eval)

    console_p = sub.add_parser("console", help="serve the operator console gateway")
    console_p.add_argument("--host", default="127.0.0.1")
    console_p.add_argument("--port", type=int, default=8000)
    console_p.add_argument("--seed", type=int, default=None)
    console_p.add_argument("--max-iterations", type=int, default=None)
    console_p.add_argument("--stall-limit", type=int, default=None)
    console_p.set_defaults(handler=cmd_console)

    robot_p = sub.add_parser("robot", help="serve a standalone robot cell over TCP")
    robot_p.add_argument("--listen", default="127.0.0.1:0", help="HOST:PORT")
    robot_p.set_defaults(handler=cmd_robot)

    tokens_p = sub.add_parser("tokens", help="image token cost for a detector request")
    tokens_p.add_argument("--width", type=int, required=True)
    tokens_p.add_argument("--height", type=int, required=True)
    tokens_p.add_argument("--detail", default="high", choices=["high", "low"])
    tokens_p.set_defaults(handler=cmd_tokens)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (
        CatalogError,
        ExperimentSpecError,
        OrchestratorError,
        PolicyConfigError,
        RobotLinkError,
        LlmError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
