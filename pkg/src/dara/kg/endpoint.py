"""Client for a remote SPARQL endpoint returning standard JSON result bindings."""

from __future__ import annotations

import json
import urllib.error
import urllib.parse
import urllib.request

from ..errors import EndpointError
from ..sexpr import SExpr, LiteralAtom
from .graph import Denotation
from .sparql import NS, compile_sparql

XSD_STRING = "http://www.w3.org/2001/XMLSchema#string"


def _node(binding: dict):
    kind = binding.get("type")
    value = binding.get("value")
    if value is None:
        raise EndpointError("binding without a value")
    if kind == "uri":
        return value[len(NS):] if value.startswith(NS) else value
    if kind in ("literal", "typed-literal"):
        return LiteralAtom(value, binding.get("datatype", XSD_STRING))
    raise EndpointError(f"unsupported binding type {kind!r}")


def denotation_from_results(doc: dict) -> Denotation:
    """Turn a SPARQL JSON results document into a denotation.

    A single ``?count`` variable is read as a COUNT result, one variable as
    an entity set and two variables as a pair set.
    """
    try:
        variables = doc["head"]["vars"]
        rows = doc["results"]["bindings"]
    except (KeyError, TypeError):
        raise EndpointError("response is not a SPARQL JSON results document") from None
    if variables == ["count"]:
        if len(rows) != 1 or "count" not in rows[0]:
            raise EndpointError("COUNT query returned no single row")
        return Denotation.count(int(rows[0]["count"]["value"]))
    if len(variables) == 1:
        v = variables[0]
        return Denotation.unary(_node(r[v]) for r in rows if v in r)
    if len(variables) == 2:
        a, b = variables
        return Denotation.binary((_node(r[a]), _node(r[b])) for r in rows if a in r and b in r)
    raise EndpointError(f"expected one or two result variables, got {len(variables)}")


class SparqlEndpoint:
    """Runs compiled queries against ``url`` (configuration key ``kg.endpoint``)."""

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def query(self, sparql: str) -> Denotation:
        data = urllib.parse.urlencode({"query": sparql}).encode()
        req = urllib.request.Request(self.url, data=data, headers={
            "Accept": "application/sparql-results+json",
            "Content-Type": "application/x-www-form-urlencoded",
        })
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                doc = json.loads(resp.read().decode())
        except (urllib.error.URLError, OSError) as exc:
            raise EndpointError(f"SPARQL endpoint {self.url}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise EndpointError(f"SPARQL endpoint returned invalid JSON: {exc}") from exc
        return denotation_from_results(doc)

    def evaluate(self, expr: SExpr, schema=None) -> Denotation:
        return self.query(compile_sparql(expr, schema))
