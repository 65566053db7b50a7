# This file makes the 'pcsracing' directory a Python package.
