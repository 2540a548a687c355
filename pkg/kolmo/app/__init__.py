"""Módulos del laboratorio: núcleo espectral, flujos, dinámica, estabilidad y diagnósticos."""
