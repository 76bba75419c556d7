"""Knowledge graph storage, evaluation and SPARQL compilation."""

from .evaluate import evaluate
from .graph import Denotation, KnowledgeGraph, load_graph, read_triples
from .schema import ClassInfo, RelationInfo, SchemaView, load_schema, schema_from_dict
from .sparql import compile_sparql
from .sparql_engine import execute_sparql

__all__ = [
    "ClassInfo", "Denotation", "KnowledgeGraph", "RelationInfo", "SchemaView",
    "compile_sparql", "evaluate", "execute_sparql", "load_graph", "load_schema",
    "read_triples", "schema_from_dict",
]
