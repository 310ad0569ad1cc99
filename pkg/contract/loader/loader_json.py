from contract.core import AgentSpec, Instance, OutcomeSpace
from contract.errors import ValidationError
from contract.rewards import RewardSpec
from contract.utils import check_reward_range
from .loader import AbstractLoader, LoadOptions


def _number(value, where: str, problems: list[str]) -> float:
    # Numbers may be stored as JSON numbers or as decimal strings.
    try:
        return float(value)
    except (TypeError, ValueError):
        problems.append(f"{where}: not a number: {value!r}")
        return 0.0


def parse_outcomes(document: dict, problems: list[str]) -> OutcomeSpace | None:
    """
    Parse "q", "outcomes" and the optional "null_outcome" fields.
    """
    try:
        q = int(document["q"])
        rows = document["outcomes"]
    except (KeyError, TypeError, ValueError) as e:
        problems.append(f"missing or malformed outcome fields: {e}")
        return None
    vectors = []
    for k, row in enumerate(rows):
        row = row if isinstance(row, list) else [row]
        if len(row) != q:
            problems.append(f"dimension mismatch: outcome {k} has {len(row)} components, q = {q}")
        vectors.append([_number(x, f"outcome {k}", problems) for x in row])
    if problems:
        return None
    try:
        return OutcomeSpace(vectors, document.get("null_outcome"))
    except ValidationError as e:
        problems.extend(e.problems)
        return None


def parse_agent(record: dict, where: str, options: LoadOptions, problems: list[str]) -> AgentSpec | None:
    """
    Parse one {"costs", "dists", "null_action"} record.
    """
    try:
        costs = [_number(c, f"{where} cost", problems) for c in record["costs"]]
        dists = [[_number(x, f"{where} dist", problems) for x in row] for row in record["dists"]]
        null_action = int(record["null_action"])
    except (KeyError, TypeError, ValueError) as e:
        problems.append(f"{where}: missing or malformed field {e}")
        return None
    if any(len(row) != len(dists[0]) for row in dists):
        problems.append(f"{where}: dimension mismatch between distributions")
        return None
    try:
        return AgentSpec(costs, dists, null_action, options.prob_tol)
    except ValidationError as e:
        problems.extend(f"{where}: {p}" for p in e.problems)
        return None


def parse_reward(record, problems: list[str]) -> RewardSpec | None:
    """
    Parse a RewardSpec object {"family", "params", "tags"?, "bounded"?}.
    """
    if not isinstance(record, dict):
        problems.append("missing reward object")
        return None
    try:
        return RewardSpec(record.get("family"), record.get("params", {}), record.get("tags", ()),
                          bool(record.get("bounded", True)))
    except ValueError as e:
        problems.append(f"reward: {e}")
        return None


class InstanceLoader(AbstractLoader):
    """
    Loader for the "pma-1" instance format.
    """

    def load(self, document: dict, options: LoadOptions) -> Instance:
        """
        Build an Instance from a parsed "pma-1" document.

        Every violated invariant is collected before failing.

        :param document: Parsed JSON with fields q, outcomes, null_outcome?, agents, reward.
        :param options: LoadOptions:
            - prob_tol: tolerance on distribution sums.
            - enum_cap: cap for enumerating Ωⁿ in the reward range check.
            - check_reward_range: whether to check that g maps Ωⁿ into [0, 1].
        :return: Instance
        :raises ValidationError: Listing every problem found.
        """
        problems: list[str] = []
        space = parse_outcomes(document, problems)
        agents = [parse_agent(record, f"agent {i}", options, problems)
                  for i, record in enumerate(document.get("agents") or [])]
        if not agents:
            problems.append("an instance needs at least one agent")
        reward = parse_reward(document.get("reward"), problems)
        if problems:
            raise ValidationError(problems)
        inst = Instance(agents, space, reward)
        if options.check_reward_range:
            problems.extend(check_reward_range(inst, options.enum_cap))
        if problems:
            raise ValidationError(problems)
        return inst
