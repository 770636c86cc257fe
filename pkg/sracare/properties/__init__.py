"""Trace LTL evaluation, bounded model checking and the A1-A12 property checks."""
