"""Shipped demo fixtures (JSON model and payoff files)."""

from importlib import resources


def fixture_path(name: str) -> str:
    """Filesystem path of a shipped fixture, e.g. ``two_period_stock.json``."""
    return str(resources.files(__package__).joinpath(name))
