"""
Core package for varcz
Contains settings, errors, experiment configuration and the experiment runner
"""
