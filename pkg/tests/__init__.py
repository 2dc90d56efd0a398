"""
Test suite for md-shaping
"""
