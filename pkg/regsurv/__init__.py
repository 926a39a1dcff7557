"""
breast cancer registry cohorts, rates and survival models
"""
