"""
Exporters package for varcz
Contains writers for JSON documents, experiment reports and CSV tables
"""
