"""Exception hierarchy shared by every subpackage."""

from __future__ import annotations


class DaraError(Exception):
    """Base class for all errors raised by this package."""


# -- logical forms -----------------------------------------------------------

class SExprError(DaraError):
    pass


class SExprSyntaxError(SExprError):
    def __init__(self, message: str, position: int, expected: str | None = None):
        self.position = position
        self.expected = expected
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class ArityError(SExprError):
    def __init__(self, operator: str, expected: int, got: int):
        self.operator = operator
        self.expected = expected
        self.got = got
        super().__init__(f"{operator} takes {expected} operand(s), got {got}")


class TypeMismatch(SExprError):
    pass


class UnboundRef(SExprError):
    def __init__(self, ref_id: str):
        self.ref_id = ref_id
        super().__init__(f"no binding for {ref_id}")


class CyclicRef(SExprError):
    def __init__(self, chain: list[str]):
        self.chain = chain
        super().__init__("cyclic reference: " + " -> ".join(chain))


class UnboundAtom(SExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"atom {name!r} is not an entity id, class or relation of the schema")


class UnsupportedForm(SExprError):
    pass


# -- knowledge graph ---------------------------------------------------------

class GraphParseError(DaraError):
    def __init__(self, message: str, line: int, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}")


class SchemaViolation(DaraError):
    def __init__(self, message: str, offenders: list[str]):
        self.offenders = sorted(offenders)
        super().__init__(f"{message}: {', '.join(self.offenders)}")


class QueryParseError(DaraError):
    pass


class EndpointError(DaraError):
    pass


# -- retrieval ---------------------------------------------------------------

class ProviderError(DaraError):
    pass


class EmptyCandidates(DaraError):
    pass


# -- actions -----------------------------------------------------------------

class ActionError(DaraError):
    """Raised by an action; the agent loop renders it into the observation slot."""


class EmptyTarget(ActionError):
    pass


class ResolveError(ActionError):
    pass


class UnknownSchemaItem(ActionError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown schema item {name!r}")


class UnknownVariable(ActionError):
    pass


class UnknownRelation(ActionError):
    pass


class UnknownAction(ActionError):
    pass


# -- agent -------------------------------------------------------------------

class GrammarError(DaraError):
    def __init__(self, message: str, line: int, expected: str | None = None):
        self.line = line
        self.expected = expected
        detail = f"line {line}: {message}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class LlmError(DaraError):
    pass


class UnknownProfile(DaraError):
    pass


class ConfigError(DaraError):
    pass


# -- evaluation / data -------------------------------------------------------

class UnknownQid(DaraError):
    def __init__(self, qids: list[str]):
        self.qids = list(qids)
        super().__init__("unknown qid(s): " + ", ".join(self.qids))


class MissingDescription(DaraError):
    def __init__(self, relation: str):
        self.relation = relation
        super().__init__(f"relation {relation!r} has no description")


class DatasetError(DaraError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path}:{line}: " if path and line else (f"line {line}: " if line else "")
        super().__init__(where + message)
