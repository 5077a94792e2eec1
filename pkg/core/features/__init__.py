"""Cognitive features: safety indices, behavior-graph criteria and priority pooling."""
