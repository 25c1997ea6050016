"""Active string-length identification and dynamic swing-task execution."""

__version__ = "0.1.0"
