"""Global-Local (differential evolution + GROUP) optimal control of 1D condensates."""
