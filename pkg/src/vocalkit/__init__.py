"""Singing assessment toolkit.

Reference-based screening against an original vocal track, reference-free
multi-dimensional scoring of full songs, a human-in-the-loop tiered
perceptual ranking benchmark, annotation analytics, and aggregated
descriptive feedback.
"""

__version__ = "0.1.0"
