"""Model of a secure SoC: framed secure boot, recovery, attestation and property checking."""

__version__ = "0.3.0"
