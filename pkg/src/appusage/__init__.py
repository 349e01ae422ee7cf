"""Smartphone app-usage features, association statistics and CGPA prediction."""
__version__ = "0.1.0"
