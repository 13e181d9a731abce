# app/evaluation/metrics.py
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping

from app.evaluation.schemas import CategoryMetrics, EpisodeResult, MetricsReport, TaskCase, TaskCategory


def _ratio(truth: int, generated: int) -> float:
    """Ground-truth over generated, capped at 1; an empty plan against an empty truth scores 1."""
    if generated <= 0:
        return 1.0
    return min(1.0, truth / generated)


def goal_condition_recall(result: EpisodeResult, case: TaskCase) -> float:
    goal = set(case.goal_atoms)
    return len(goal & set(result.achieved)) / len(goal)


def _fold(results: List[EpisodeResult], truths: Mapping[str, TaskCase]) -> CategoryMetrics:
    if not results:
        return CategoryMetrics()
    successes = [r for r in results if r.success]
    gcr = sum(1.0 if r.success else goal_condition_recall(r, truths[r.task_id]) for r in results) / len(results)
    ru = eff = 0.0
    if successes:
        ru = sum(_ratio(truths[r.task_id].gt_action_count, r.action_count) for r in successes) / len(successes)
        eff = sum(_ratio(truths[r.task_id].gt_makespan, r.makespan) for r in successes) / len(successes)
    return CategoryMetrics(
        episodes=len(results),
        successes=len(successes),
        sr=len(successes) / len(results),
        gcr=gcr,
        ru=ru,
        eff=eff,
    )


def metrics(results: Iterable[EpisodeResult], truths: Mapping[str, TaskCase]) -> MetricsReport:
    """
    SR, GCR, RU and Eff overall and per task category. RU and Eff average
    over successful episodes only.
    """
    results = sorted(results, key=lambda r: (r.task_id, r.seed))
    unknown = sorted({r.task_id for r in results if r.task_id not in truths})
    if unknown:
        raise KeyError(f"results reference unknown tasks: {', '.join(unknown)}")
    by_category: Dict[str, List[EpisodeResult]] = defaultdict(list)
    for r in results:
        by_category[truths[r.task_id].category.value].append(r)
    return MetricsReport(
        overall=_fold(results, truths),
        categories={c.value: _fold(by_category[c.value], truths) for c in TaskCategory if by_category[c.value]},
    )


# ============================
# Text table
# ============================
COLUMNS = ("SR", "GCR", "RU", "Eff")


def render_table(reports: Mapping[str, MetricsReport]) -> str:
    """
    Column-aligned table: one row per labelled run, a SR/GCR/RU/Eff group per
    category plus an overall group.
    """
    groups = [c.value for c in TaskCategory if any(c.value in r.categories for r in reports.values())]
    groups.append("overall")
    label_width = max([len("Method")] + [len(label) for label in reports])
    cell = 6

    header = "Method".ljust(label_width)
    sub = " " * label_width
    for group in groups:
        width = cell * len(COLUMNS)
        header += " | " + group.capitalize().center(width)
        sub += " | " + "".join(col.rjust(cell) for col in COLUMNS)
    lines = [header.rstrip(), sub.rstrip(), "-" * len(sub)]

    for label, report in reports.items():
        row = label.ljust(label_width)
        for group in groups:
            m = report.overall if group == "overall" else report.categories.get(group)
            if m is None:
                row += " | " + "".join("-".rjust(cell) for _ in COLUMNS)
            else:
                row += " | " + "".join(f"{v:.2f}".rjust(cell) for v in (m.sr, m.gcr, m.ru, m.eff))
        lines.append(row)
    return "\n".join(lines) + "\n"
