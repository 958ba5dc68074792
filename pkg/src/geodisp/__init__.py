"""Geographic bias auditing for instance segmentation and detection outputs."""

__version__ = "0.1.0"
