# Sphinx configuration for fpm_codesign

from fpm_codesign import __version__

project = 'fpm_codesign'
copyright = '2026, fpm_codesign developers'
author = 'fpm_codesign developers'
version = __version__
release = version

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.napoleon',
    'sphinx.ext.viewcode',
    'stevedore.sphinxext'
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
exclude_patterns = []

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'fpm_codesign_doc'

autoclass_content = "both"
intersphinx_mapping = {'python': ('https://docs.python.org/3', None),
                       'numpy': ('https://numpy.org/doc/stable', None)}
