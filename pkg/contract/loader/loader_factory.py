import json

from contract.bayesian import BayesianInstance
from contract.core import Instance
from contract.errors import ValidationError
from .loader import JSONSource, LoadOptions, TextSource
from .loader_bayes import BayesianLoader
from .loader_json import InstanceLoader

_REGISTRY = {
    "pma-1": InstanceLoader,
    "pma-bayes-1": BayesianLoader,
}


def read_document(source) -> dict:
    """
    Read and parse the JSON document behind a source.

    :param source: JSONSource (file path), TextSource (in-memory text) or plain str text.
    :return: The parsed document.
    :raises ValidationError: On malformed JSON.
    """
    if isinstance(source, JSONSource):
        with open(source.filepath, "r", encoding="utf-8") as f:
            text = f.read()
    elif isinstance(source, TextSource):
        text = source.text
    elif isinstance(source, str):
        text = source
    else:
        raise ValueError(f'Not supported type of source: {type(source).__name__}')
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError([f"malformed JSON: {e}"]) from e
    if not isinstance(document, dict):
        raise ValidationError(["malformed JSON: top level must be an object"])
    return document


def load_any(source, options: LoadOptions = LoadOptions()) -> Instance | BayesianInstance:
    """
    Load an instance using the loader registered for the document's "version" field.

    :param source: See read_document.
    :param options: LoadOptions controlling validation.
    :return: Instance ("pma-1") or BayesianInstance ("pma-bayes-1").
    :raises ValidationError: On malformed documents or violated invariants.
    """
    document = read_document(source)
    version = document.get("version", "pma-1")
    cls = _REGISTRY.get(version)
    if not cls:
        raise ValidationError([f"unsupported format version: {version}"])
    return cls().load(document, options)


def load_instance(source, options: LoadOptions = LoadOptions()) -> Instance:
    """
    Load and validate a non-Bayesian "pma-1" instance.
    """
    inst = load_any(source, options)
    if not isinstance(inst, Instance):
        raise ValidationError(["expected a pma-1 instance, got a Bayesian document"])
    return inst


def load_bayesian(source, options: LoadOptions = LoadOptions()) -> BayesianInstance:
    """
    Load and validate a "pma-bayes-1" instance.
    """
    bi = load_any(source, options)
    if not isinstance(bi, BayesianInstance):
        raise ValidationError(["expected a pma-bayes-1 instance"])
    return bi
