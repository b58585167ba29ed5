"""Patient locational open data: model, Turtle codec, ingest, matching and queries."""

__version__ = "0.1.0"
