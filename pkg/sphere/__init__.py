# vortflow Fast Summation Package
__version__ = "0.1.0"