"""
The module that contains the three probabilistic models (energy, generator, encoder),
their closed-form linear-Gaussian instantiations and the shared exception types.
"""
