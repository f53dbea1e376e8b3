"""Transform-domain, temporally distributed video backdoor triggers and tooling."""

__version__ = "0.1.0"
