"""rewardevo: multitask LLM-driven discovery of reward programs for learned
black-box optimizers."""

__version__ = "0.1.0"
