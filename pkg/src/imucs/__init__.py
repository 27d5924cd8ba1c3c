"""Compressive-sensing transmission of IMU frames over an AWGN channel with
power-matched Gaussian measurement matrices, Lasso receivers and a
variational auto-encoder receiver."""

__version__ = "0.1.0"
