from contract.bayesian import BayesianInstance
from contract.errors import ValidationError
from contract.utils import check_reward_range
from .loader import AbstractLoader, LoadOptions
from .loader_json import parse_agent, parse_outcomes, parse_reward


class BayesianLoader(AbstractLoader):
    """
    Loader for the "pma-bayes-1" format.
    """

    def load(self, document: dict, options: LoadOptions) -> BayesianInstance:
        """
        Build a BayesianInstance from a parsed "pma-bayes-1" document.

        :param document: Parsed JSON with the outcome fields, "types", "per_type"
            (per agent, per type: costs, dists, null_action), "support"
            (list of {"types": [...], "prob": num}) and "reward".
        :param options: LoadOptions, see InstanceLoader.
        :return: BayesianInstance
        :raises ValidationError: Listing every problem found.
        """
        problems: list[str] = []
        space = parse_outcomes(document, problems)
        num_types = int(document.get("types", 0))
        per_type = []
        for i, types in enumerate(document.get("per_type") or []):
            if len(types) != num_types:
                problems.append(f"agent {i} lists {len(types)} types, expected {num_types}")
            per_type.append([parse_agent(record, f"agent {i} type {t}", options, problems)
                             for t, record in enumerate(types)])
        if not per_type:
            problems.append("a Bayesian instance needs at least one agent")
        support, probs = [], []
        for k, entry in enumerate(document.get("support") or []):
            try:
                support.append(tuple(int(t) for t in entry["types"]))
                probs.append(float(entry["prob"]))
            except (KeyError, TypeError, ValueError) as e:
                problems.append(f"support entry {k}: malformed field {e}")
        reward = parse_reward(document.get("reward"), problems)
        if problems:
            raise ValidationError(problems)
        bi = BayesianInstance(per_type, space, support, probs, reward)
        if options.check_reward_range:
            problems.extend(check_reward_range(bi.type_instance(bi.support[0]), options.enum_cap))
        if problems:
            raise ValidationError(problems)
        return bi
