# app/optim/loss.py
from typing import List

from app.optim.schemas import FailureClass, Feedback, PromptVersion, TextualLoss

_DIAGNOSTIC_LEADS = {
    FailureClass.parse: "The generated PDDL could not be parsed",
    FailureClass.malformed_response: "The response did not match the required output format",
    FailureClass.unsolvable: "The planner found no plan for the generated problem",
    FailureClass.budget: "The planner ran out of search budget",
}


def _report_lines(feedback: Feedback) -> List[str]:
    report = feedback.report
    if feedback.failure_class == FailureClass.precondition:
        return [
            f"Step {report.step} {report.action} is not applicable: precondition {report.violated} does not hold.",
            "State before the step: " + " ".join(report.state),
        ]
    if report.reason is not None and report.reason.value == "goal":
        return [
            "The plan ends without reaching " + ", ".join(report.unsatisfied_goals) + ".",
            "Final state: " + " ".join(report.state),
        ]
    reason = report.reason.value if report.reason is not None else "invalid"
    return [f"Step {report.step} {report.action} was rejected ({reason}): {report.violated}."]


def _diagnostic_lines(feedback: Feedback) -> List[str]:
    diag = feedback.diagnostic
    where = f" at line {diag.line}, column {diag.column}" if diag.line is not None else ""
    return [f"{_DIAGNOSTIC_LEADS[feedback.failure_class]}{where}: {diag.message}"]


def loss_fn(prompt: PromptVersion, feedback: Feedback) -> TextualLoss:
    """
    Renders structured failure evidence as loss prose. The rendering depends
    only on the evidence and the prompt version, so equal inputs give
    byte-identical prose.
    """
    head = f"Agent {feedback.agent} (prompt v{prompt.version}): {feedback.failure_class.value} failure"
    if feedback.origin != feedback.agent:
        head += f" reported by {feedback.origin}"
    if feedback.robot:
        head += f" for {feedback.robot}"
    lines = [head + "."]
    if feedback.report is not None:
        lines.extend(_report_lines(feedback))
    else:
        lines.extend(_diagnostic_lines(feedback))
    return TextualLoss(
        source=feedback.agent,
        failure_class=feedback.failure_class,
        feedback=feedback,
        prompt_version=prompt.version,
        prose="\n".join(lines),
    )
