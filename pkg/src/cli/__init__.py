"""
ReachDiff CLI Package

Subcommands grouped by area: data, training, sampling and experiments.
"""
