"""Zero-dynamics attacks and topology-switching defense for second-order
multi-agent consensus networks."""

__version__ = "0.1.0"
