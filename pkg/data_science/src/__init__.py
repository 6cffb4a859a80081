"""
Source code package for the pretraining library and its CLI
"""
