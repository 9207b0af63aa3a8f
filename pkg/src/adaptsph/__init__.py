"""SPH elastodynamics with a stress-adaptive B-spline kernel."""
