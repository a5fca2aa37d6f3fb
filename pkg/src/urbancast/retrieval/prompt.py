from __future__ import annotations

from dataclasses import dataclass

from ..exceptions import InputError

PROMPT_TEMPLATE = (
    "To predict {task} for a given target region described as follows: {description}."
    "\n\n"
    "List the relevant urban features, buildings, land use or functions nearby the "
    "target region that may provide useful contextual information."
)


@dataclass(frozen=True)
class TaskSpec:
    """A forecasting task: a short name plus the phrase inserted into the prompt."""

    name: str
    task_text: str

    def __post_init__(self):
        if not self.name or not self.task_text:
            raise InputError("task name and task_text must be non-empty")


def build_prompt(task: TaskSpec, description: str) -> str:
    if not task.task_text:
        raise InputError("empty task text")
    if not description:
        raise InputError("empty region description")
    return PROMPT_TEMPLATE.format(task=task.task_text, description=description)
