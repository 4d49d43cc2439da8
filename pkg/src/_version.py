# Read by the package and by `--version`
__version__ = "0.1.0"
