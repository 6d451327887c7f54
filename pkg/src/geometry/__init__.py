"""
Geometry package for varcz
Discretized spaces of homogeneous type and dyadic cube systems
"""
