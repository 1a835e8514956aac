"""
Command-line surface for the granular-growth toolkit.
"""
