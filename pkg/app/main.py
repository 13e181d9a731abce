# app/main.py
import argparse
import logging
import os
import sys
from typing import List, Optional

from app.config import settings
from app.evaluation.metrics import render_table
from app.evaluation.suite import SuiteRunConfig, load_suite, run_suite
from app.exceptions import ConfigurationError, PlanningError, SuiteLoadError
from app.hierarchy.orchestrator import Success, orchestrate
from app.hierarchy.schemas import HierarchyConfig, HierarchyState
from app.llm.backend import LLMBackend
from app.llm.cassette import RecordingBackend
from app.llm.factory import BACKEND_KINDS, create_backend
from app.multirobot.models import load_environment, parse_goal
from app.optim.history import PromptHistory
from app.optim.schemas import PromptVersion
from app.utils.records import RunTrace, read_jsonl, write_json, write_jsonl

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PLANNING_FAILED = 2

DEFAULT_SUITE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "suite")


# ===============================
# Shared setup
# ===============================

def _apply_settings(args: argparse.Namespace) -> None:
    """Config file first, then flags, so flags > environment > file > defaults."""
    if getattr(args, "config", None):
        settings.apply_file(args.config)
    for key, attr in (("KMAX", "kmax"), ("LAYERS", "layers"), ("SEEDS", "seeds"), ("PARALLEL", "parallel"),
                      ("EXTERNAL_PLANNER", "external_planner")):
        settings.override(key, getattr(args, attr, None))


def _hierarchy_config(args: argparse.Namespace) -> HierarchyConfig:
    try:
        return HierarchyConfig.from_settings(
            optimize_prompts=not args.no_prompt_optimization,
            share_meta_prompts=not args.no_meta_sharing,
        )
    except ValueError as e:
        raise ConfigurationError(str(e)) from e


def _backend_kind(args: argparse.Namespace) -> str:
    if args.backend:
        return args.backend
    if args.script:
        return "scripted"
    if args.cassette:
        return "cassette"
    return "live"


def _backend(args: argparse.Namespace) -> LLMBackend:
    return create_backend(_backend_kind(args), cassette=args.cassette, script=args.script)


def _run_label(config: HierarchyConfig) -> str:
    if not config.optimize_prompts:
        return "no-prompt-opt"
    if not config.share_meta_prompts:
        return "no-meta-sharing"
    return "hierarchical"


def _announce(name: str, path: str) -> None:
    print(f"{name}: {path}")


# ===============================
# Commands
# ===============================

def _plan_run(args: argparse.Namespace, backend: LLMBackend) -> int:
    env = load_environment(args.env)
    if args.goal:
        try:
            env = env.with_goal(parse_goal(args.goal))
        except PlanningError as e:
            raise ConfigurationError(f"invalid --goal: {e}") from e
    config = _hierarchy_config(args)
    state = HierarchyState(args.instruction, config)
    trace = RunTrace()
    outcome = orchestrate(args.instruction, env, backend, config=config, trace=trace, state=state)

    os.makedirs(args.out, exist_ok=True)
    _announce("trace", trace.save(os.path.join(args.out, "trace.jsonl")))
    _announce("prompts", state.history.save(os.path.join(args.out, "prompts.jsonl")))
    if isinstance(outcome, Success):
        specs = [{"source": s.source, "robot": s.robot, "domain": s.domain_text, "problem": s.problem_text}
                 for s in outcome.specs]
        _announce("specs", write_jsonl(os.path.join(args.out, "specs.jsonl"), specs))
        _announce("plan", write_json(os.path.join(args.out, "plan.json"), outcome.plan.to_record()))
        return EXIT_OK
    print(f"no valid plan after {outcome.iterations} iterations", file=sys.stderr)
    return EXIT_PLANNING_FAILED


def cmd_plan(args: argparse.Namespace) -> int:
    return _plan_run(args, _backend(args))


def cmd_record(args: argparse.Namespace) -> int:
    recorder = RecordingBackend(_backend(args))
    code = _plan_run(args, recorder)
    path = args.output_cassette or os.path.join(args.out, "cassette.json")
    recorder.cassette(suite_id=os.path.basename(args.env)).save(path)
    _announce("cassette", path)
    return code


def cmd_eval(args: argparse.Namespace) -> int:
    suite = load_suite(args.suite)
    config = SuiteRunConfig(
        seeds=settings.SEEDS,
        parallel=settings.PARALLEL,
        executor=args.executor,
        backend=_backend_kind(args) if (args.backend or args.cassette) else "scripted",
        cassette=args.cassette,
        script=args.script,
        hierarchy=_hierarchy_config(args),
    )
    recorder = None
    if args.output_cassette:
        if config.executor != "local":
            raise ConfigurationError("--output-cassette needs the local executor")
        recorder = RecordingBackend(config.backend_factory(suite)())
    run = run_suite(suite, config, backend_factory=(lambda: recorder) if recorder is not None else None)
    table = render_table({_run_label(config.hierarchy): run.report})
    print(table, end="")

    os.makedirs(args.out, exist_ok=True)
    _announce("episodes", write_jsonl(os.path.join(args.out, "episodes.jsonl"), run.results))
    _announce("metrics", write_json(os.path.join(args.out, "metrics.json"), run.report))
    table_path = os.path.join(args.out, "metrics.txt")
    with open(table_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(table)
    _announce("table", table_path)
    if recorder is not None:
        recorder.cassette(suite_id=suite.id).save(args.output_cassette)
        _announce("cassette", args.output_cassette)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    suite = load_suite(args.suite)
    width = max(len(t.id) for t in suite.tasks)
    print(f"{'task'.ljust(width)}  category  actions  makespan")
    for case in suite.tasks:
        print(f"{case.id.ljust(width)}  {case.category.value.ljust(8)}  {case.gt_action_count:7d}  {case.gt_makespan:8d}")
    return EXIT_OK


def _load_versions(path: str) -> List[PromptVersion]:
    versions = []
    try:
        for record in read_jsonl(path):
            if "kind" in record:
                if record["kind"] == "prompt-version":
                    versions.append(PromptVersion.model_validate(record["data"]["prompt"]))
                continue
            versions.append(PromptVersion.model_validate(record))
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigurationError(f"{path} is not a prompt history or trace: {e}") from e
    return versions


def render_history(versions: List[PromptVersion]) -> str:
    """Before/after view of every update of one owner."""
    lines = [f"Owner {versions[0].owner}", f"Version {versions[0].version} ({versions[0].provenance})"]
    lines.extend(f"  {line}" for line in versions[0].text.split("\n"))
    for n, (before, after) in enumerate(zip(versions, versions[1:])):
        old, new = before.text.split("\n"), after.text.split("\n")
        iteration = after.iteration if after.iteration is not None else n
        lines.append("")
        lines.append(f"Iteration {iteration}")
        lines.append("Before:")
        if n == 0:
            lines.extend(f"  {line}" for line in old)
        else:
            lines.append("  (includes previous update)")
        lines.append("After:")
        changes = [f'  Remove "{line}"' for line in old if line not in new]
        changes += [f'  Append "{line}"' for line in new if line not in old]
        lines.extend(changes or ["  (unchanged)"])
    return "\n".join(lines) + "\n"


def cmd_prompts(args: argparse.Namespace) -> int:
    versions = _load_versions(args.log)
    if not versions:
        print(f"error: {args.log} holds no prompt versions", file=sys.stderr)
        return EXIT_CONFIG
    try:
        history = PromptHistory(versions)
    except PlanningError as e:
        raise ConfigurationError(f"{args.log} has inconsistent prompt versions: {e}") from e
    owned = history.history(args.owner)
    if not owned:
        print(f"error: unknown owner {args.owner}; known: {', '.join(history.owners)}", file=sys.stderr)
        return EXIT_CONFIG
    print(render_history(owned), end="")
    return EXIT_OK


# ===============================
# Parser
# ===============================

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")


def _planning(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=BACKEND_KINDS, help="LLM backend (default from --script/--cassette)")
    parser.add_argument("--cassette", help="cassette file to replay")
    parser.add_argument("--script", help="scripted backend rule file")
    parser.add_argument("--kmax", type=int, help="outer iteration limit (default 5)")
    parser.add_argument("--layers", type=int, help="hierarchy depth (default 3)")
    parser.add_argument("--parallel", type=int, help="worker count (default: logical cores)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--no-meta-sharing", action="store_true", help="disable layer meta-prompt updates")
    parser.add_argument("--no-prompt-optimization", action="store_true", help="disable all prompt updates")
    parser.add_argument("--external-planner", help="external classical planner executable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description="Hierarchical multi-robot LLM planner")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, text in (("plan", cmd_plan, "plan one instruction"),
                             ("record", cmd_record, "plan one instruction and record a cassette")):
        p = sub.add_parser(name, help=text)
        p.add_argument("instruction")
        p.add_argument("--env", required=True, help="environment YAML file")
        p.add_argument("--goal", action="append", help="goal literal, repeatable; overrides the environment goal")
        if name == "record":
            p.add_argument("--output-cassette", help="cassette path (default OUT/cassette.json)")
        _planning(p)
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="run the task suite")
    p.add_argument("suite", nargs="?", default=DEFAULT_SUITE, help="suite directory (default: bundled suite)")
    p.add_argument("--seeds", type=int, help="seeds per task (default 5)")
    p.add_argument("--executor", choices=("local", "celery"), default="local")
    p.add_argument("--output-cassette", help="record every backend exchange of the run to this cassette")
    _planning(p)
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("prompts", help="show the version history of one prompt")
    p.add_argument("log", help="prompt history or trace JSONL file")
    p.add_argument("owner", help="agent id (E1.0) or meta:<layer>")
    _common(p)
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("oracle", help="print suite ground truths")
    p.add_argument("suite", nargs="?", default=DEFAULT_SUITE)
    _common(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        _apply_settings(args)
        return args.func(args)
    except (ConfigurationError, SuiteLoadError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
