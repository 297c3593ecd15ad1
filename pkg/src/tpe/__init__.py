"""Threshold predicate encryption over exact rationals.

Encrypts fixed-length integer vectors so that a token holder learns exactly
one bit: whether the encrypted vector and the token's vector land on the
accepting side of a threshold comparison.  Ships metric plans (inner product,
squared euclidean distance, hamming distance), a template-blind
authentication service, encrypted keyword search, and an empirical security
harness.
"""

__version__ = "0.1.0"
