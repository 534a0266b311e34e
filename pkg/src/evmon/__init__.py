"""Stream-based gas-price and block-capacity monitoring for EVM networks."""

__version__ = "0.1.0"
