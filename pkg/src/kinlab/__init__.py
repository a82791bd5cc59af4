from kinlab.registry import prepare_chart, prepare_domain

__version__ = "0.1.0"
