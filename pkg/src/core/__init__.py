"""
ReachDiff Core Package

Core infrastructure modules: exceptions, logging and artifact storage.
"""
