"""feedtopics: topic discovery and human-evaluation tooling for short user comments."""

__version__ = "0.1.0"
