"""Trajectory predictor: cognitive encoders, Leanformer attention and the mixture decoder."""
