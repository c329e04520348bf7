"""Sliced-spectrum IM/DD link simulator and neural equalizer workbench."""

__version__ = "0.1.0"
