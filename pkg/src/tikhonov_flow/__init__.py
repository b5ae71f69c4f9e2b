"""Tikhonov-regularized inertial primal-dual flows."""
