"""Desk-scale spatial data warehouse.

Ingests georeferenced raster scenes, cuts them into a seamless mosaic of
200x200 tiles, incrementally builds multi-resolution image pyramids while
the data stays online, and serves tiles, pages, place search, and coverage
maps over HTTP.
"""

__version__ = "0.1.0"
