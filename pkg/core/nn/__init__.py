"""Float64 tensor core with reverse-mode differentiation, layers and optimizer."""
