"""Ground state energy of mixed p-spin glasses from the zero-temperature Parisi functional."""
__version__ = "0.1.0"
