"""Authenticated verifier/prover protocol: messages, sessions and channel."""
