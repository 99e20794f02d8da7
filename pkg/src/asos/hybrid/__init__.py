"""Gated expert/neural policies and their multi-agent training loop."""
