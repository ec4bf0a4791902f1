"""Gadget-chain discovery and validation over a miniature object-oriented IR.

Pipeline: static taint summaries enumerate candidate deserialization gadget
chains; a structure-aware directed greybox fuzzer then confirms which chains
are actually reachable by synthesizing injection objects.
"""

__version__ = "0.1.0"
