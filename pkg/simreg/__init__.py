# Gene-trait similarity regression for survival outcomes
__version__ = "0.1.0"
