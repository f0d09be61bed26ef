"""Certified MaxSAT preprocessing.

Rewrites weighted-CNF instances with standard preprocessing techniques while
emitting a pseudo-Boolean proof log, and independently checks such logs to
certify that the rewritten instance has the same optimum as the original.
"""

__version__ = "0.1.0"
