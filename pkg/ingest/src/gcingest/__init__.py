"""Converters from public raw graph distributions to the native
graphcondense dataset directory format."""

from .ogb import load_ogb
from .planetoid import load_planetoid

__all__ = ["load_planetoid", "load_ogb"]
