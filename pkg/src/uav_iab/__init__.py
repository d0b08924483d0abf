"""UAV-mounted IAB base station: system-level simulator and DQN placement agent."""

__version__ = "0.1.0"
