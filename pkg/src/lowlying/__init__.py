"""Numerical toolkit for low-lying zeros of Maass and holomorphic form families."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"
