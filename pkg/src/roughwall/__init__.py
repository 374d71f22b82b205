"""Homogenized wall laws for flows over rough boundaries."""
