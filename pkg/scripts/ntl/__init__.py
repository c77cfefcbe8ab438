"""Bias reduction pipeline for non-technical loss (NTL) detection."""
