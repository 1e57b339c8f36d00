"""
ReachDiff Test Suite
"""
