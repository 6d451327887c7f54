"""
Analysis package for varcz
Variation functionals, martingales, operators, sparse families and weights
"""
