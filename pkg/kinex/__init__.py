"""
kinex: a laboratory for the binomial reshuffling model of wealth exchange.
"""
__version__ = "0.1.0"
