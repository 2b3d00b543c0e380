"""Friction-gated ban-appeal workflow engine and its experiment tooling."""

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
