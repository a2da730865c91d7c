"""Multi-timescale anti-jamming agents with robustness to sensing error."""

__version__ = "0.1.0"
