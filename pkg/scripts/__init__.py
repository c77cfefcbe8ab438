"""Command-line scripts and the NTL domain package."""
