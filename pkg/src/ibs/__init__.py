"""Intent-based security orchestration: translation pipeline, capability
registry, agent bus, simulated domain agents, northbound gateway, and a
reproducible evaluation harness."""

__version__ = "0.1.0"
