"""
remshare: weighted processor-sharing queues and their fluid limits.

Simulate the prelimit queue, solve the measure-valued fluid path
directly or as a Picard fixed point, and check that scaled
simulations approach that path.
"""

__version__ = "0.1.0"
