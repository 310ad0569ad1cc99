from abc import ABC, abstractmethod
from dataclasses import dataclass

from contract.utils import ENUM_CAP


@dataclass(frozen=True)
class JSONSource:
    filepath: str


@dataclass(frozen=True)
class TextSource:
    text: str


@dataclass(frozen=True)
class LoadOptions:
    prob_tol: float = 1e-9
    enum_cap: int = ENUM_CAP
    check_reward_range: bool = True


class AbstractLoader(ABC):
    """Contract for all loaders that build an instance from a parsed document."""

    @abstractmethod
    def load(self, document: dict, options: LoadOptions):
        """Build an instance from the given JSON document."""
        raise NotImplementedError
