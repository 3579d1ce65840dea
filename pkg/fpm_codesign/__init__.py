from fpm_codesign.version import __version__   # noqa: F401
