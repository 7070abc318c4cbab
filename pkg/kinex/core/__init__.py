"""
Core numerical package - framework agnostic.
Distributions, the mean-field solver, the stochastic simulators and every
diagnostic live here; the CLI only parses arguments and writes artifacts.
"""
