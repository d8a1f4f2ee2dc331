"""Time-normal ordering, response kernels and P-functionals on small quantum models."""
