"""Emotion/speaker conditioning mechanisms for expressive TTS, at desk scale."""

__version__ = "0.1.0"
