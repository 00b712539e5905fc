"""wandrelay: context-triggered asynchronous AR message relay."""

__version__ = "0.1.0"
