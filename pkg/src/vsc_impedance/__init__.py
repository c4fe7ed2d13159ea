'''DC input impedance of grid-tie voltage-source converters: analytic and
reduced models, an averaged simulator with a software frequency-response
analyzer, and source/load stability checks.'''

__version__ = "0.1.0"
