"""Learn byte-level models of attack payloads and NIDS signatures, and measure
how synthetic signatures change a detector's false-positive/negative rates."""

__version__ = "0.1.0"
