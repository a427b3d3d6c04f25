"""
Content-based song recommendation engine
"""
