"""Power-law flow in outlet domains with prescribed flux."""
__version__ = "0.1.0"
