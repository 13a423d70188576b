"""HTTP service exposing the readout toolkit."""
