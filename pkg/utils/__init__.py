"""Channel, sensing, optimisation and experiment building blocks."""
