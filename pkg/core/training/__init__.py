"""Losses, learning-rate schedule, training loop and evaluation."""
