"""heavecast: short-horizon heave forecasting with calibrated uncertainty.

Synthetic JONSWAP seas drive a one-DOF platform surrogate; a from-scratch
LSTM learns the wave-to-motion map, and stochastic-dropout inference turns
each forecast into a predictive distribution.
"""

__version__ = "0.1.0"
