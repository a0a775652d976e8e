"""gffperc: lattice potential theory, Gaussian free field sampling,
level-set percolation observables, analytic-extension estimators, and a
multi-scale coarse-graining engine on Z^d."""

__version__ = "0.1.0"
