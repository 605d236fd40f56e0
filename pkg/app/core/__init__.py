"""
Core application utilities and configuration
"""
