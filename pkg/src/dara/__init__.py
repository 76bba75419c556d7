"""Knowledge-graph question answering by iterative task decomposition."""

__version__ = "0.1.0"
