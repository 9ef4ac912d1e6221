"""Multi-agent wildfire lookout-tower simulator with a PPO training harness."""

__version__ = "0.1.0"
