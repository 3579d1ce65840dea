# single source of truth for package version,
# see https://packaging.python.org/en/latest/single_source_version/
__version__ = "0.1.0"
