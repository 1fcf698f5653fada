"""Exact symbolic tools for Adler identities, λ-brackets and integrable hierarchies."""

from __future__ import annotations

__version__ = "0.1.0"
