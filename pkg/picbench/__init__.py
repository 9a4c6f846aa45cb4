"""Electrostatic Vlasov-Poisson particle-in-cell benchmark on a periodic box."""
