"""FourierGNN: multivariate forecasting with Fourier graph operators on hypervariate graphs."""

__version__ = "0.1.0"
