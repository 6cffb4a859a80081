"""
Test package for the masked-reconstruction pretraining library
"""
