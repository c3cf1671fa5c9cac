"""Content-addressed scholarly publication: handles, certificates of existence,
review objects, identity escrow, dual-network stores and ranked saved queries."""

__version__ = "0.1.0"
