"""Core nestgraph components"""
