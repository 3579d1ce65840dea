"""Helpers for locating and running dataset sources"""
