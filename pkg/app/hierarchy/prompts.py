# app/hierarchy/prompts.py
# Default prompts per layer. Layer 0 is the mission planner, layer L-1 the
# robot-level PDDL writers, everything in between allocates to robot types.

ROOT_PROMPT = (
    "You are the mission planner. Decompose the mission into subtasks and assign each subtask to a robot type."
)
ALLOCATION_PROMPT = 'Decompose into subtasks as needed and assign them to robots. Hint: ""'
LEAF_PROMPT = (
    "Write a PDDL domain and problem for the robot's subtask using only the objects "
    "and skills listed in the environment."
)

ROOT_REPLANNING_PROMPT = "You are the mission planner. Replanning always happens at this level."
ALLOCATION_REPLANNING_PROMPT = (
    "You are a robot-type allocation agent. A plan below you failed. Answer \"self\" if the failure "
    "comes from how you split or assigned the work, or \"parent\" if the task you were given is wrong."
)
LEAF_REPLANNING_PROMPT = (
    "You are a robot-level planning agent. Your PDDL plan failed. Answer \"self\" if rewriting your own "
    "domain and problem can fix it, or \"parent\" if the subtask you were assigned must change."
)

ROOT_META = "Shared guidance for the mission planner."
ALLOCATION_META = "Shared guidance for robot-type allocation agents."
LEAF_META = "Shared guidance for robot-level PDDL writers."


def _pick(layer: int, layers: int, root: str, middle: str, leaf: str) -> str:
    if layer == 0:
        return root
    if layer == layers - 1:
        return leaf
    return middle


def default_prompt(layer: int, layers: int) -> str:
    return _pick(layer, layers, ROOT_PROMPT, ALLOCATION_PROMPT, LEAF_PROMPT)


def replanning_prompt(layer: int, layers: int) -> str:
    return _pick(layer, layers, ROOT_REPLANNING_PROMPT, ALLOCATION_REPLANNING_PROMPT, LEAF_REPLANNING_PROMPT)


def initial_meta(layer: int, layers: int) -> str:
    return _pick(layer, layers, ROOT_META, ALLOCATION_META, LEAF_META)
