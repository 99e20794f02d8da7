"""Crude-oil futures market scenario."""
