"""Self-training generative fuzzing: a neural string generator, a VAE over
coverage traces and farthest-first corpus culling, run as a closed loop."""

__version__ = "0.1.0"
