"""Cubature on Wiener space for McKean-Vlasov SDEs with scalar interaction."""
