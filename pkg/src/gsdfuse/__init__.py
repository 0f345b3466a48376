"""GSDFuse: steganalysis of social-media dialogue forests."""

__version__ = "0.1.0"
