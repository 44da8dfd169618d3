"""Likelihood-free inference with GP and latent-variable deep GP surrogates."""
