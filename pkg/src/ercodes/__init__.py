"""Error-reducing inner codes over the AWGN channel.

Sparse regression codes with AMP decoding, superposed LDPC codes with soft successive
interference cancellation, and the Monte Carlo harness used to compare them.
"""
__version__ = "0.1.0"
