"""
Parsers package for varcz
Contains parsers for registry strings and JSON documents
"""
