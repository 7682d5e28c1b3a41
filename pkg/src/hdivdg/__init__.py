"""H(div)-conforming interior penalty DG solvers and preconditioners."""
__version__ = "0.1.0"
