"""HTTP API and CLI for running distributions, managing the platform, and
serving audit queries."""

from casealot.gateway.api import RunManager, create_app
from casealot.gateway.cli import main

__all__ = ["create_app", "RunManager", "main"]
