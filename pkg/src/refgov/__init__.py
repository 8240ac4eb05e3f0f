"""Reference governors for discrete-time MIMO linear systems."""
