"""Minimal neural-network stack on top of the kernel backends."""
