"""Laboratorio numérico de flujos de Kolmogorov y flujos de cizalla en el toro."""
