"""Learned index with a numerical normalizing flow in front of an after-flow learned index."""
try:
    from nflindex._version import __version__
except ImportError:  # source tree without generated version file
    __version__ = '0.0.0.dev0'
