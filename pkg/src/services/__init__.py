# Services for adaptive dyne phase discrimination

__version__ = "0.1.0"
