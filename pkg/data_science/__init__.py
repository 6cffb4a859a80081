"""
Data Science package for masked-reconstruction sensor pretraining
"""
